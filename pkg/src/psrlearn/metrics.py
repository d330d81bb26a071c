"""Evaluation metrics: proxy NLL, one-step prediction accuracy and L2 state error.

All three metrics come from one shared filtering pass.  Sequences that share
a prefix share filtered states, so the pass runs over the distinct prefixes
of the data set rather than over every sequence separately.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import EmptyDataError
from .features import FeatureSpec, future_index_table, num_positions
from .psr import DENOMINATOR_EPS, INVALID_PNLL, PsrModel, filter_sequence, one_step_scores

CSV_FIELDS = (
    "iteration",
    "mean_pnll",
    "ospa",
    "l2se_mean",
    "l2se_log10_mean",
    "l2se_median",
    "invalid_probability_count",
    "clamp_events",
)


@dataclass(frozen=True)
class MetricsReport:
    mean_pnll: float
    ospa: float
    l2se_mean: float
    l2se_log10_mean: float
    l2se_median: float
    invalid_probability_count: int
    clamp_events: int

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_values(self) -> list[str]:
        return [fmt_number(getattr(self, f.name)) for f in fields(self)]


def fmt_number(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass
class _PassResult:
    pnll: np.ndarray  # per sequence
    invalid: np.ndarray  # per sequence, bool
    correct: int
    predictions: int
    errors: np.ndarray  # pooled per-position L2SE
    clamp_events: int


def _shared_pass(model: PsrModel, seqs: Sequence[Sequence[int]], spec: FeatureSpec) -> _PassResult:
    if len(seqs) == 0:
        raise EmptyDataError("empty evaluation set")
    by_len = defaultdict(list)
    for i, s in enumerate(seqs):
        by_len[len(s)].append(i)

    pnll = np.empty(len(seqs))
    invalid = np.zeros(len(seqs), dtype=bool)
    correct = predictions = clamps = 0
    errors = []
    w = model.score_matrix
    b = model.b_inf
    for length, members in sorted(by_len.items()):
        arr = np.asarray([seqs[i] for i in members], dtype=np.int64).reshape(len(members), length)
        r = _pass_equal_length(model, w, b, arr, spec)
        pnll[members] = r.pnll
        invalid[members] = r.invalid
        correct += r.correct
        predictions += r.predictions
        clamps += r.clamp_events
        errors.append(r.errors)
    return _PassResult(pnll, invalid, correct, predictions, np.concatenate(errors), clamps)


def _pass_equal_length(model, w, b, arr, spec) -> _PassResult:
    n, length = arr.shape
    npos = num_positions(length, spec)
    k = spec.future_length
    states = model.q1[None, :]
    node = np.zeros(n, dtype=np.int64)
    log_abs = np.zeros(n)
    negative = np.zeros(n, dtype=bool)
    dead = np.zeros(n, dtype=bool)
    correct = clamps = 0
    errors = np.empty((n, npos))
    fut = None
    if npos > 0:
        fut = future_index_table(arr, spec)  # (n, length-k+1, k)

    for t in range(length):
        if t < npos:
            pred = np.argmax(states @ w.T, axis=1)
            correct += int(np.sum(pred[node] == arr[:, t]))
        pairs = node * model.alphabet_size + arr[:, t]
        uniq, new_node = np.unique(pairs, return_inverse=True)
        parent, sym = np.divmod(uniq, model.alphabet_size)
        raw = np.empty((len(uniq), model.d))
        for o in np.unique(sym):
            sel = sym == o
            raw[sel] = states[parent[sel]] @ model.operators[o].T
        s = raw @ b
        clamped = np.abs(s) < DENOMINATOR_EPS
        used = np.where(clamped, np.where(s < 0, -DENOMINATOR_EPS, DENOMINATOR_EPS), s)
        new_node = new_node.ravel()
        clamps += int(np.sum(clamped[new_node]))
        if t + 1 < length:
            # Product so far equals (last raw denominator) * prod(used normalizers).
            log_abs += np.log(np.abs(used[new_node]))
            negative ^= used[new_node] < 0
        else:
            last = s[new_node]
            dead |= (last == 0.0) | ~np.isfinite(last)
            with np.errstate(divide="ignore"):
                log_abs += np.log(np.abs(last))
            negative ^= last < 0
        states = raw / used[:, None]
        node = new_node
        if t < npos:
            q = states[node]
            idx = fut[:, t + 1, :]
            hit = np.take_along_axis(q, idx, axis=1).sum(axis=1)
            errors[:, t] = 0.5 * (np.einsum("ij,ij->i", q, q) - 2.0 * hit + k)

    bad = dead | negative | ~np.isfinite(log_abs)
    pnll = np.where(bad, INVALID_PNLL, -log_abs)
    return _PassResult(pnll, bad, correct, n * npos, errors.ravel(), clamps)


def _l2_summary(errors: np.ndarray) -> tuple[float, float, float]:
    if errors.size == 0:
        return math.nan, math.nan, math.nan
    mean = float(np.mean(errors))
    log_mean = math.log10(mean) if mean > 0 else -math.inf
    return mean, log_mean, float(np.median(errors))


def _spec_for(model: PsrModel, spec: Optional[FeatureSpec]) -> FeatureSpec:
    if spec is not None:
        return spec
    if model.feature_spec is None:
        raise ValueError("model carries no FeatureSpec; pass spec explicitly")
    return model.feature_spec


def evaluate(model: PsrModel, seqs: Sequence[Sequence[int]], spec: Optional[FeatureSpec] = None) -> MetricsReport:
    spec = _spec_for(model, spec)
    r = _shared_pass(model, seqs, spec)
    mean, log_mean, median = _l2_summary(r.errors)
    return MetricsReport(
        mean_pnll=float(np.mean(r.pnll)),
        ospa=r.correct / r.predictions if r.predictions else math.nan,
        l2se_mean=mean,
        l2se_log10_mean=log_mean,
        l2se_median=median,
        invalid_probability_count=int(np.sum(r.invalid)),
        clamp_events=r.clamp_events,
    )


def mean_pnll(model: PsrModel, seqs, spec: Optional[FeatureSpec] = None) -> float:
    spec = _spec_for(model, spec)
    return float(np.mean(_shared_pass(model, seqs, spec).pnll))


def ospa(model: PsrModel, seqs, spec: Optional[FeatureSpec] = None) -> float:
    spec = _spec_for(model, spec)
    r = _shared_pass(model, seqs, spec)
    return r.correct / r.predictions


def l2se_stats(
    model: PsrModel,
    seqs,
    spec: Optional[FeatureSpec] = None,
    psi_provider: Optional[Callable[[Sequence[int], int], np.ndarray]] = None,
) -> tuple[float, float, float]:
    """(mean, log10 of mean, pooled median) of ``0.5 * ||psi_{t+1} - q_{t+1}||^2``.

    ``psi_provider(seq, t)`` overrides the indicator features; it is called
    for every position ``t + 1`` with a complete future window.
    """
    spec = _spec_for(model, spec)
    if psi_provider is None:
        return _l2_summary(_shared_pass(model, seqs, spec).errors)
    errs = []
    for seq in seqs:
        trace = filter_sequence(model, seq)
        for t in range(num_positions(len(seq), spec)):
            r = psi_provider(seq, t + 1) - trace.states[t + 1]
            errs.append(0.5 * float(r @ r))
    return _l2_summary(np.asarray(errs))


def predict_next(model: PsrModel, q: np.ndarray) -> int:
    """Argmax of the raw one-step scores; ties go to the smallest symbol."""
    return int(np.argmax(one_step_scores(model, q)))
