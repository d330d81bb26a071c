"""Acceptance criteria, one test per criterion.

Each test prints a ``criterion N: PASS|FAIL`` line (collected into the
terminal summary).  Criterion 6 needs the full desk-scale ring study; it
reuses ``results/ring_desk`` when that directory was produced by
``configs/ring_desk.cfg`` and otherwise runs the study itself, which takes
hours on one core.  Set ``PSRLEARN_DESK_RESULTS`` to point elsewhere.
"""
import csv
import itertools
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from psrlearn.features import FeatureSpec
from psrlearn.hmm import belief_after, random_dense_hmm, sequence_log_prob, stationary_distribution
from psrlearn.harness.config import load_config, parse_config
from psrlearn.harness.experiment import run_ring_experiment
from psrlearn.psr import PsrModel, deserialize, filter, filter_sequence, one_step_scores, pnll, serialize
from psrlearn.refine import finite_difference_gradient, multi_step_gradient, one_step_gradient
from psrlearn.two_stage import exact_moments, two_stage_regression

import conftest

REPO = Path(__file__).resolve().parents[1]
DESK_CONFIG = REPO / "configs" / "ring_desk.cfg"


def report(criterion, ok, detail=""):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}" + (f"  ({detail})" if detail else "")
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# -- gradient fixtures -------------------------------------------------------------


def random_instance(rng, d, alphabet):
    ops = rng.uniform(-1.0, 1.0, size=(alphabet, d, d)) + 2.0 * np.eye(d)
    b = rng.uniform(0.5, 1.5, size=d)
    q1 = rng.uniform(0.1, 1.0, size=d)
    model = PsrModel(q1, b, ops)
    q = rng.uniform(0.1, 1.0, size=d)
    q = q / (b @ q)
    psi = (rng.random(d) < 0.5).astype(float)
    return model, q, psi


def window_loss(model, q, window, psi):
    """Loss as a function of the operator applied at the first window position only."""
    def loss(first_op):
        v = first_op @ q
        for o in window[1:]:
            v = model.operators[o] @ v
        state = v / (model.b_inf @ v)
        r = psi - state
        return 0.5 * float(r @ r)
    return loss


def max_relative_error(analytic, numeric, floor=1e-8):
    mask = np.abs(numeric) > floor
    return float(np.max(np.abs(analytic[mask] - numeric[mask]) / np.abs(numeric[mask])))


def test_criterion_1_one_step_gradient():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for i in range(100):
        d = (3, 6, 12)[i % 3]
        model, q, psi = random_instance(rng, d, 3)
        o = int(rng.integers(3))
        g = one_step_gradient(model, q, o, psi)
        fd = finite_difference_gradient(window_loss(model, q, [o], psi), model.operators[o], step=1e-5)
        worst = max(worst, max_relative_error(g, fd))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-5 and elapsed < 10
    assert report(1, ok, f"max rel err {worst:.2e}, {elapsed:.1f}s"), (worst, elapsed)


def test_criterion_2_multi_step_gradient():
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    worst = 0.0
    repeated = 0
    for i in range(100):
        d = (3, 6, 12)[i % 3]
        h = 2 + i % 2
        model, q, psi = random_instance(rng, d, 3)
        if i % 4 == 0:
            window = [1] * h  # repeated symbol: only the earliest use is differentiated
        else:
            window = [int(x) for x in rng.integers(0, 3, size=h)]
        repeated += len(set(window)) < h
        g = multi_step_gradient(model, q, window, psi)
        fd = finite_difference_gradient(window_loss(model, q, window, psi), model.operators[window[0]], step=1e-5)
        worst = max(worst, max_relative_error(g, fd))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-5 and elapsed < 30 and repeated > 0
    assert report(2, ok, f"max rel err {worst:.2e}, {repeated} windows with repeats, {elapsed:.1f}s")


def test_criterion_3_reduction():
    rng = np.random.default_rng(303)
    worst = 0.0
    for i in range(100):
        model, q, psi = random_instance(rng, (3, 6, 12)[i % 3], 4)
        o = int(rng.integers(4))
        diff = multi_step_gradient(model, q, [o], psi, h=1) - one_step_gradient(model, q, o, psi)
        worst = max(worst, float(np.max(np.abs(diff))))
    assert report(3, worst <= 1e-12, f"max abs diff {worst:.1e}")


def test_criterion_4_population_consistency():
    start = time.perf_counter()
    hmm = random_dense_hmm(3, 3, seed=404)
    assert np.linalg.matrix_rank(hmm.transition) == 3 and np.linalg.matrix_rank(hmm.emission) == 3
    hmm = hmm.with_initial(stationary_distribution(hmm))
    spec = FeatureSpec(3, 2, 2, True)
    model = two_stage_regression(exact_moments(hmm, spec, 4), lam=0.0, spec=spec)

    worst_a = 0.0
    for length in range(4):
        for hist in itertools.product(range(3), repeat=length):
            q = filter_sequence(model, hist).states[-1]
            truth = hmm.emission @ belief_after(hmm, hist)
            worst_a = max(worst_a, float(np.max(np.abs(one_step_scores(model, q) - truth))))
    worst_b = max(abs(pnll(model, s) + sequence_log_prob(hmm, s)) for s in itertools.product(range(3), repeat=4))
    elapsed = time.perf_counter() - start
    ok = worst_a <= 1e-6 and worst_b <= 1e-6 and elapsed < 60
    assert report(4, ok, f"next-symbol err {worst_a:.1e}, pnll err {worst_b:.1e}, {elapsed:.1f}s")


def test_criterion_5_filtering_invariants():
    """Random valid-state models: nonnegative operators and a positive
    normalizer, so filtered states stay bounded.  Sign-indefinite operators
    can drive a denominator close to cancellation, where states grow large
    and the absolute scale error grows with them; that class is measured
    relative to the state size and reported alongside."""
    rng = np.random.default_rng(505)
    worst_norm = worst_scale = worst_rel_indefinite = 0.0
    for step in range(10_000):
        if step % 100 == 0:
            d = int(rng.integers(2, 10))
            model = PsrModel(rng.uniform(0.1, 1.0, d), rng.uniform(0.5, 1.5, d),
                             rng.uniform(0.0, 1.0, size=(3, d, d)))
            q = model.q1
            harsh, hq, _ = random_instance(rng, d, 3)
        o = int(rng.integers(3))
        nxt, _ = filter(model, q, o)
        worst_norm = max(worst_norm, abs(float(model.b_inf @ nxt) - 1.0))
        for c in (0.1, 10.0):
            worst_scale = max(worst_scale, float(np.max(np.abs(filter(model, c * q, o)[0] - nxt))))
        q = nxt
        hn, _ = filter(harsh, hq, o)
        for c in (0.1, 10.0):
            err = float(np.max(np.abs(filter(harsh, c * hq, o)[0] - hn))) / max(1.0, float(np.max(np.abs(hn))))
            worst_rel_indefinite = max(worst_rel_indefinite, err)
        hq = hn
    ok = worst_norm <= 1e-9 and worst_scale <= 1e-10
    assert report(5, ok, f"normalization err {worst_norm:.1e}, scale err {worst_scale:.1e}; "
                         f"sign-indefinite relative scale err {worst_rel_indefinite:.1e}")


# -- criterion 6 -------------------------------------------------------------------


def _read(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


@pytest.fixture(scope="module")
def desk_study(tmp_path_factory):
    config = load_config(DESK_CONFIG)
    out = Path(os.environ.get("PSRLEARN_DESK_RESULTS", REPO / config.output_dir))
    recorded = out / "config.cfg"
    complete = recorded.exists() and all(
        (out / f"trial_{i}_{m}.csv").exists() for i in range(config.trials) for m in config.methods
    )
    wall = None
    if complete and parse_config(recorded.read_text()) == config:
        timing = out / "timing.txt"
        if timing.exists():
            wall = float(timing.read_text().split("=")[1])
    else:
        out = tmp_path_factory.mktemp("ring_desk")
        start = time.perf_counter()
        result = run_ring_experiment(config, out)
        wall = time.perf_counter() - start
        assert not result.failed
    trials = [{m: _read(out / f"trial_{i}_{m}.csv") for m in config.methods} for i in range(config.trials)]
    return config, trials, wall


def _final_mean(trials, method, metric):
    return float(np.mean([t[method][metric][-1] for t in trials]))


def _start_mean(trials, method, metric):
    return float(np.mean([t[method][metric][0] for t in trials]))


def test_criterion_6a_ospa(desk_study):
    _, trials, _ = desk_study
    init = _start_mean(trials, "2sr", "ospa")
    ig, mig = _final_mean(trials, "ig", "ospa"), _final_mean(trials, "mig", "ospa")
    ok = ig >= init and mig >= init and mig >= ig - 0.01
    assert report("6a", ok, f"2SR {init:.4f}, IG {ig:.4f}, multi-step {mig:.4f}")


def test_criterion_6b_median_l2se(desk_study):
    _, trials, _ = desk_study
    better = sum(t["ig"]["l2se_median"][-1] < t["ig"]["l2se_median"][0] for t in trials)
    assert report("6b", better >= 8, f"IG median L2SE decreased in {better}/{len(trials)} trials")


def test_criterion_6c_pnll(desk_study):
    _, trials, _ = desk_study
    parts = []
    ok = True
    for m in ("ig", "mig"):
        start, end = _start_mean(trials, m, "mean_pnll"), _final_mean(trials, m, "mean_pnll")
        ok &= end <= start
        parts.append(f"{m} {start:.2f} -> {end:.2f}")
    assert report("6c", ok, ", ".join(parts))


def test_criterion_6d_initialization(desk_study):
    _, trials, _ = desk_study
    rnd, ig = _final_mean(trials, "ig_random", "ospa"), _final_mean(trials, "ig", "ospa")
    assert report("6d", rnd < ig, f"random-init IG {rnd:.4f} vs 2SR-init IG {ig:.4f}")


def test_criterion_6e_constant_baselines(desk_study):
    config, trials, _ = desk_study
    ok = True
    for t in trials:
        for m in ("2sr", "random_baseline"):
            for k, col in t[m].items():
                if k != "iteration":
                    ok &= bool(np.all((col == col[0]) | (np.isnan(col) & np.isnan(col[0]))))
            ok &= len(t[m]["iteration"]) == config.refine.iterations + 1
    assert report("6e", ok, "2SR and random baseline rows identical across iterations")


def test_criterion_6_runtime(desk_study):
    _, _, wall = desk_study
    if wall is None:
        report("6 runtime", False, "wall time not recorded")
        pytest.fail("wall time not recorded")
    assert report("6 runtime", wall < 15 * 60, f"{wall / 60:.1f} min against a 15 min target")


# -- criteria 7 and 8 --------------------------------------------------------------

SMALL = """
num_states = 6
num_obs = 5
num_sequences = 600
sequence_length = 10
methods = 2sr, ig, mig, ig_random, mig_random, psim_random, random_baseline
trials = 2
iterations = 3
seed = 17
"""


def test_criterion_7_determinism(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL)
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        subprocess.run([sys.executable, "-m", "psrlearn.harness.cli", "experiment", str(cfg), "-o", str(out),
                        "--no-plot"], check=True)
        outs.append(out)
    names = sorted(p.name for p in outs[0].glob("*.csv"))
    same = names == sorted(p.name for p in outs[1].glob("*.csv")) and all(
        (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names
    )
    assert report(7, same and len(names) == 7 * 3, f"{len(names)} CSV files compared byte for byte")


def test_criterion_8_serialization():
    rng = np.random.default_rng(808)
    ok = True
    for i in range(100):
        a = int(rng.integers(1, 4))
        k = int(rng.integers(1, 3))
        spec = FeatureSpec(a, k, int(rng.integers(0, 3)), bool(rng.integers(2)))
        d = spec.future_dim
        scale = 10.0 ** rng.uniform(-8, 8)
        model = PsrModel(rng.normal(size=d), rng.normal(size=d) + 3.0, scale * rng.normal(size=(a, d, d)),
                         feature_spec=spec if i % 2 else None)
        text = serialize(model)
        back = deserialize(text)
        ok &= serialize(back) == text
        ok &= all(np.array_equal(x, y) for x, y in
                  ((model.q1, back.q1), (model.b_inf, back.b_inf), (model.operators, back.operators)))
        ok &= back.feature_spec == model.feature_spec
    assert report(8, ok, "100 random models")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
