"""Command line entry point: ``psrlearn <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from ..errors import PsrError
from ..features import FeatureSpec
from ..hmm import (
    generate_ring_hmm,
    load_hmm,
    random_dense_hmm,
    read_sequences,
    sample_sequences,
    save_hmm,
    write_sequences,
)
from ..metrics import CSV_FIELDS, evaluate
from ..psr import load_model, save_model
from ..refine import RefineConfig, psim_baseline, refine_multi_step, refine_one_step
from ..two_stage import accumulate_sequences, two_stage_regression
from .config import load_config
from .experiment import run_experiment
from .plot import plot_csvs

USAGE_ERROR = 2


def _gen_hmm(args):
    make = generate_ring_hmm if args.kind == "ring" else random_dense_hmm
    save_hmm(make(args.states, args.obs, args.seed), args.output)


def _sample(args):
    hmm = load_hmm(args.hmm)
    write_sequences(sample_sequences(hmm, args.n, args.len, args.seed), args.output)


def _train(args):
    seqs = read_sequences(args.sequences)
    alphabet = args.alphabet or 1 + max(int(s.max()) for s in seqs if len(s))
    spec = FeatureSpec(alphabet, args.future_length, args.history_length, not args.no_bias)
    model = two_stage_regression(accumulate_sequences(seqs, spec), spec=spec, ridge=args.ridge)
    save_model(model, args.output)


def _refine(args):
    model = load_model(args.model)
    spec = model.feature_spec
    if spec is None:
        raise PsrError("model file has no feature_spec")
    seqs = read_sequences(args.sequences)
    cfg = RefineConfig(
        learning_rate=args.learning_rate,
        iterations=args.iterations,
        horizon=args.horizon if args.method == "mig" else 1,
        grad_norm="l1_unit" if args.grad_norm == "l1" else "none",
        init="random" if args.method == "psim" else "two_stage",
        seed=args.seed,
    )
    if args.method == "psim":
        final, _ = psim_baseline(seqs, spec, cfg)
    elif args.method == "mig":
        final, _ = refine_multi_step(model, seqs, spec, cfg)
    else:
        final, _ = refine_one_step(model, seqs, spec, cfg)
    save_model(final, args.output)


def _eval(args):
    model = load_model(args.model)
    report = evaluate(model, read_sequences(args.sequences), model.feature_spec)
    lines = [] if args.no_header else [",".join(CSV_FIELDS)]
    lines.append(",".join([str(args.iteration)] + report.csv_values()))
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _experiment(args):
    config = load_config(args.config)
    if args.workers is not None:
        config = replace(config, workers=args.workers)
    out_dir = Path(args.output or config.output_dir)
    start = time.perf_counter()
    result = run_experiment(config, out_dir)
    (out_dir / "timing.txt").write_text(f"wall_seconds = {time.perf_counter() - start:.0f}\n")
    avg = sorted(out_dir.glob("avg_*.csv"))
    if avg and not args.no_plot:
        plot_csvs(avg, out_dir)
    if result.failed:
        print(f"failed trials: {result.failed}", file=sys.stderr)
        return 1
    return 0


def _plot(args):
    for path in plot_csvs(args.csv, args.output):
        print(path)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psrlearn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-hmm", help="write a random HMM as JSON")
    g.add_argument("--states", type=int, default=20)
    g.add_argument("--obs", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--kind", choices=("ring", "dense"), default="ring")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=_gen_hmm)

    s = sub.add_parser("sample", help="sample sequences from an HMM JSON file")
    s.add_argument("hmm")
    s.add_argument("--n", type=int, default=10_000)
    s.add_argument("--len", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=_sample)

    t = sub.add_parser("train-2sr", help="fit a PSR by two-stage regression")
    t.add_argument("sequences")
    t.add_argument("--alphabet", type=int, help="alphabet size (default: largest symbol + 1)")
    t.add_argument("--future-length", type=int, default=2)
    t.add_argument("--history-length", type=int, default=2)
    t.add_argument("--no-bias", action="store_true", help="drop the constant history feature")
    t.add_argument("--ridge", type=float, default=1e-6)
    t.add_argument("-o", "--output", required=True)
    t.set_defaults(func=_train)

    r = sub.add_parser("refine", help="refine a PSR with Inference Gradients")
    r.add_argument("model")
    r.add_argument("sequences")
    r.add_argument("--method", choices=("ig", "mig", "psim"), default="ig")
    r.add_argument("--iterations", type=int, default=50)
    r.add_argument("--learning-rate", type=float, default=1e-3)
    r.add_argument("--horizon", type=int, default=2)
    r.add_argument("--grad-norm", choices=("l1", "none"), default="l1")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("-o", "--output", required=True)
    r.set_defaults(func=_refine)

    e = sub.add_parser("eval", help="print one metrics CSV row")
    e.add_argument("model")
    e.add_argument("sequences")
    e.add_argument("--iteration", type=int, default=0)
    e.add_argument("--no-header", action="store_true")
    e.add_argument("-o", "--output")
    e.set_defaults(func=_eval)

    x = sub.add_parser("experiment", help="run a multi-trial study from a config file")
    x.add_argument("config")
    x.add_argument("-o", "--output", help="output directory (overrides output_dir)")
    x.add_argument("--workers", type=int)
    x.add_argument("--no-plot", action="store_true")
    x.set_defaults(func=_experiment)

    pl = sub.add_parser("plot", help="one SVG chart per metric from metric CSVs")
    pl.add_argument("csv", nargs="+")
    pl.add_argument("-o", "--output", default=".")
    pl.set_defaults(func=_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except FileNotFoundError as exc:
        parser.print_usage(sys.stderr)
        print(f"psrlearn: error: {exc.filename}: no such file", file=sys.stderr)
        return USAGE_ERROR
    except (PsrError, ValueError) as exc:
        print(f"psrlearn: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
