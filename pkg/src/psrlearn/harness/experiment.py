"""Multi-trial experiment orchestration and CSV output.

Each trial is a deterministic function of ``config.seed + trial_index``.
Per-trial CSVs are written as ``trial_<i>_<method>.csv`` and the elementwise
mean over successful trials as ``avg_<method>.csv``.  Every CSV has the
header :data:`psrlearn.metrics.CSV_FIELDS` and ``iterations + 1`` rows.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import InvalidArgumentError
from ..features import FeatureSpec
from ..hmm import generate_ring_hmm, sample_sequences
from ..metrics import CSV_FIELDS, evaluate, fmt_number
from ..psr import save_model
from ..refine import random_init, refine_multi_step, refine_one_step
from ..two_stage import accumulate_sequences, two_stage_regression
from .config import CONSTANT_METHODS, ExperimentConfig, format_config
from .text import cap_alphabet, chunk, ingest_text, sample_excerpt, write_vocab

log = logging.getLogger(__name__)

MIG_DEFAULT_HORIZON = 2


@dataclass
class TrialResult:
    trial: int
    seeds: dict
    curves: dict = field(default_factory=dict)  # method -> list[MetricsReport]
    models: dict = field(default_factory=dict)  # method -> final PsrModel
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class ExperimentResult:
    trials: list
    files: list

    @property
    def failed(self) -> list:
        return [t.trial for t in self.trials if not t.ok]


def trial_seeds(config: ExperimentConfig, trial: int) -> dict:
    """Independent integer seeds for each random step of one trial."""
    base = config.seed + trial
    names = ("data", "sample", "split", "init", "order")
    state = np.random.SeedSequence(base).generate_state(len(names))
    return {"trial": base, **{n: int(s) for n, s in zip(names, state)}}


def split_train_test(seqs: np.ndarray, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Shuffle, then put the first ``round(fraction * n)`` rows in the training set."""
    n = len(seqs)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fraction * n))
    if not 0 < n_train < n:
        raise InvalidArgumentError(f"split of {n} sequences leaves an empty side")
    return seqs[perm[:n_train]], seqs[perm[n_train:]]


def _method_config(config: ExperimentConfig, method: str, seed: int):
    cfg = config.refine_config(method, seed)
    if method in ("mig", "mig_random") and "horizon" not in config.overrides.get(method, {}):
        cfg = replace(cfg, horizon=max(cfg.horizon, MIG_DEFAULT_HORIZON))
    return cfg


def run_methods(train, test, spec: FeatureSpec, config: ExperimentConfig, seeds: dict,
                result: TrialResult) -> TrialResult:
    """Fit and evaluate every configured method on one split."""
    n_rows = config.refine.iterations + 1
    methods = config.methods
    two_stage = random_model = None
    if any(m in ("2sr", "ig", "mig") for m in methods):
        two_stage = two_stage_regression(accumulate_sequences(train, spec), spec=spec, ridge=config.ridge)
    if any(m.endswith("random") or m == "random_baseline" for m in methods):
        random_model = random_init(spec, train, seeds["init"])

    for method in methods:
        if method in CONSTANT_METHODS:
            model = two_stage if method == "2sr" else random_model
            report = evaluate(model, test, spec)
            result.curves[method] = [report] * n_rows
            result.models[method] = model
            continue
        cfg = _method_config(config, method, seeds["order"])
        start = two_stage if method in ("ig", "mig") else random_model
        run = refine_multi_step if method.startswith("mig") else refine_one_step
        final, logs = run(start, train, spec, cfg, test_seqs=test)
        result.curves[method] = [entry.test for entry in logs]
        result.models[method] = final
    return result


def _ring_trial(config: ExperimentConfig, trial: int) -> TrialResult:
    seeds = trial_seeds(config, trial)
    result = TrialResult(trial, seeds)
    try:
        hmm = generate_ring_hmm(config.num_states, config.num_obs, seeds["data"])
        seqs = sample_sequences(hmm, config.num_sequences, config.sequence_length, seeds["sample"])
        train, test = split_train_test(seqs, config.train_fraction, seeds["split"])
        run_methods(train, test, config.feature_spec(config.num_obs), config, seeds, result)
    except Exception as exc:  # one bad trial must not stop the study
        log.exception("trial %d failed", trial)
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def _text_trial(config: ExperimentConfig, trial: int, ids: np.ndarray, alphabet: int) -> TrialResult:
    seeds = trial_seeds(config, trial)
    result = TrialResult(trial, seeds)
    try:
        excerpt = sample_excerpt(ids, config.excerpt_length, np.random.default_rng(seeds["data"]))
        seqs = chunk(excerpt, config.chunk_length)
        train, test = split_train_test(seqs, config.train_fraction, seeds["split"])
        run_methods(train, test, config.feature_spec(alphabet), config, seeds, result)
    except Exception as exc:
        log.exception("trial %d failed", trial)
        result.error = f"{type(exc).__name__}: {exc}"
    return result


# -- output --------------------------------------------------------------------


def _csv_text(rows) -> str:
    lines = [",".join(CSV_FIELDS)]
    lines += [",".join(r) for r in rows]
    return "\n".join(lines) + "\n"


def curve_csv(curve: list) -> str:
    return _csv_text([str(i)] + rep.csv_values() for i, rep in enumerate(curve))


def average_curves(curves: list) -> list:
    """Elementwise mean of equal-length curves, as rows of floats (iteration first)."""
    names = CSV_FIELDS[1:]
    out = []
    for i in range(len(curves[0])):
        row = [float(i)]
        for name in names:
            values = [float(getattr(c[i], name)) for c in curves]
            row.append(float(np.mean(values)) if values else math.nan)
        out.append(row)
    return out


def average_csv(curves: list) -> str:
    rows = []
    for row in average_curves(curves):
        rows.append([str(int(row[0]))] + [fmt_number(x) for x in row[1:]])
    return _csv_text(rows)


def write_outputs(config: ExperimentConfig, trials: list, out_dir: Path, save_models: bool = True) -> list:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.cfg").write_text(format_config(config))
    files = [out_dir / "config.cfg"]
    for t in trials:
        if not t.ok:
            continue
        for method in config.methods:
            path = out_dir / f"trial_{t.trial}_{method}.csv"
            path.write_text(curve_csv(t.curves[method]))
            files.append(path)
            if save_models:
                mpath = out_dir / f"trial_{t.trial}_{method}.json"
                save_model(t.models[method], mpath)
                files.append(mpath)
    good = [t for t in trials if t.ok]
    if good:
        for method in config.methods:
            path = out_dir / f"avg_{method}.csv"
            path.write_text(average_csv([t.curves[method] for t in good]))
            files.append(path)
    return files


def _map_trials(fn, config: ExperimentConfig, extra=()):
    indices = range(config.trials)
    if config.workers == 1:
        return [fn(config, i, *extra) for i in indices]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        futures = [pool.submit(fn, config, i, *extra) for i in indices]
        return [f.result() for f in futures]


def run_ring_experiment(config: ExperimentConfig, out_dir=None) -> ExperimentResult:
    if config.kind != "ring":
        raise InvalidArgumentError("run_ring_experiment needs kind = ring")
    out_dir = Path(out_dir or config.output_dir)
    trials = _map_trials(_ring_trial, config)
    return ExperimentResult(trials, write_outputs(config, trials, out_dir))


def run_text_experiment(config: ExperimentConfig, corpus_path=None, out_dir=None) -> ExperimentResult:
    if config.kind != "text":
        raise InvalidArgumentError("run_text_experiment needs kind = text")
    corpus_path = corpus_path or config.corpus_path
    if corpus_path is None:
        raise InvalidArgumentError("no corpus_path given")
    out_dir = Path(out_dir or config.output_dir)
    ids, vocab = ingest_text(corpus_path)
    if len(ids) < config.excerpt_length:
        raise InvalidArgumentError(
            f"corpus has {len(ids)} symbols, excerpt_length is {config.excerpt_length}"
        )
    out_dir.mkdir(parents=True, exist_ok=True)
    write_vocab(vocab, out_dir / "vocab.txt")
    ids, alphabet = cap_alphabet(ids, config.max_symbols)
    trials = _map_trials(_text_trial, config, (ids, alphabet))
    files = [out_dir / "vocab.txt"] + write_outputs(config, trials, out_dir)
    return ExperimentResult(trials, files)


def run_experiment(config: ExperimentConfig, out_dir=None) -> ExperimentResult:
    if config.kind == "ring":
        return run_ring_experiment(config, out_dir)
    return run_text_experiment(config, out_dir=out_dir)
