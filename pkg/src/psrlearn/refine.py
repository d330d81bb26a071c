"""Inference Gradient refinement of PSR operators.

The loss at position ``t`` is ``0.5 * ||psi_{t+h} - q_{t+h}||^2`` where
``q_{t+h}`` is obtained by filtering from the current state estimate.  Only
the operators ``B_i`` are updated; ``q1`` and ``b_inf`` keep their initial
values.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernel
from .errors import DivergenceError, InvalidArgumentError
from .features import FeatureSpec, future_index_table
from .metrics import MetricsReport, evaluate
from .psr import DENOMINATOR_EPS, PsrModel, clamp_denominator
from .two_stage import accumulate_sequences, two_stage_regression

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class RefineConfig:
    learning_rate: float = 1e-3
    iterations: int = 50
    horizon: int = 1
    grad_norm: str = "l1_unit"
    init: str = "two_stage"
    seed: int = 0
    multi_step_average: bool = True

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise InvalidArgumentError("learning_rate must be >= 0")
        if self.iterations < 0:
            raise InvalidArgumentError("iterations must be >= 0")
        if self.horizon < 1:
            raise InvalidArgumentError("horizon must be >= 1")
        if self.grad_norm not in ("l1_unit", "none"):
            raise InvalidArgumentError(f"unknown grad_norm {self.grad_norm!r}")
        if self.init not in ("two_stage", "random"):
            raise InvalidArgumentError(f"unknown init {self.init!r}")


@dataclass
class IterationLog:
    iteration: int
    test: Optional[MetricsReport]
    train: Optional[MetricsReport] = None
    clamp_events: int = 0
    wall_time: float = 0.0


# -- gradients ---------------------------------------------------------------


def _residual_factor(b_inf, v, psi):
    """``((b q^T - I) / s) (psi - q)`` for the unnormalized product ``v``."""
    s = clamp_denominator(float(b_inf @ v))
    q = v / s
    r = psi - q
    return (b_inf * float(q @ r) - r) / s


def one_step_gradient(model, q_hat: np.ndarray, o: int, psi_next: np.ndarray) -> np.ndarray:
    """Gradient of ``0.5 * ||psi_{t+1} - filter(q_hat, o)||^2`` with respect to ``B_o``."""
    v = model.operators[o] @ q_hat
    return np.outer(_residual_factor(model.b_inf, v, psi_next), q_hat)


def multi_step_gradient(model, q_hat: np.ndarray, window: Sequence[int],
                        psi_target: np.ndarray, h: Optional[int] = None) -> np.ndarray:
    """Gradient of the ``h``-step loss with respect to the operator of ``window[0]``.

    The state ``q_{t+h}`` is ``B_{w[h-1]} ... B_{w[0]} q_hat`` normalized.
    Only the occurrence at position ``t`` is differentiated, even if the
    same symbol appears again later in the window.
    """
    if h is None:
        h = len(window)
    if h < 1 or len(window) != h:
        raise InvalidArgumentError("window length must equal h >= 1")
    v = np.asarray(q_hat, dtype=float)
    for o in window:
        v = model.operators[o] @ v
    g = _residual_factor(model.b_inf, v, psi_target)
    for o in reversed(window[1:]):
        g = model.operators[o].T @ g
    return np.outer(g, q_hat)


def normalize_gradient_l1(g: np.ndarray) -> np.ndarray:
    norm = float(np.sum(np.abs(g)))
    if norm == 0.0:
        return g.copy()
    return g / norm


def finite_difference_gradient(loss: Callable[[np.ndarray], float], b: np.ndarray,
                               step: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss`` with respect to every entry of ``b``."""
    if step <= 0:
        raise InvalidArgumentError("step must be positive")
    b = np.array(b, dtype=float)
    grad = np.empty_like(b)
    for idx in np.ndindex(b.shape):
        orig = b[idx]
        b[idx] = orig + step
        up = loss(b)
        b[idx] = orig - step
        down = loss(b)
        b[idx] = orig
        grad[idx] = (up - down) / (2.0 * step)
    return grad


# -- data layout -------------------------------------------------------------


@dataclass
class _FlatData:
    symbols: np.ndarray
    starts: np.ndarray
    lengths: np.ndarray
    fut: np.ndarray
    fut_starts: np.ndarray

    @classmethod
    def build(cls, seqs: Sequence[Sequence[int]], spec: FeatureSpec) -> "_FlatData":
        arrays = [np.asarray(s, dtype=np.int64) for s in seqs]
        lengths = np.array([len(s) for s in arrays], dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.int64)
        tables = [future_index_table(s, spec) for s in arrays]
        fut_len = np.array([len(t) for t in tables], dtype=np.int64)
        fut_starts = np.concatenate([[0], np.cumsum(fut_len)[:-1]]).astype(np.int64)
        fut = np.concatenate(tables) if tables else np.zeros((0, spec.future_length), np.int64)
        symbols = np.concatenate(arrays) if arrays else np.zeros(0, np.int64)
        return cls(symbols, starts, lengths, np.ascontiguousarray(fut), fut_starts)


# -- refinement loops ---------------------------------------------------------


def _check_data(model: PsrModel, seqs, spec: FeatureSpec):
    if spec.future_dim != model.d or spec.alphabet_size != model.alphabet_size:
        raise InvalidArgumentError("FeatureSpec does not match the model")
    for s in seqs:
        if len(s) and (min(s) < 0 or max(s) >= model.alphabet_size):
            raise InvalidArgumentError("sequence symbol outside the model alphabet")


def _run(model: PsrModel, seqs, spec: FeatureSpec, config: RefineConfig, horizon: int,
         test_seqs=None, train_metrics: bool = False,
         callback: Optional[Callable[[IterationLog], None]] = None):
    _check_data(model, seqs, spec)
    data = _FlatData.build(seqs, spec)
    ops = np.array(model.operators, dtype=float, order="C")
    b = np.ascontiguousarray(model.b_inf, dtype=float)
    q1 = np.ascontiguousarray(model.q1, dtype=float)
    rng = np.random.default_rng(config.seed)

    def snapshot():
        return model.replace(operators=ops.copy(), feature_spec=model.feature_spec or spec)

    def log_entry(i, clamps, elapsed):
        current = snapshot()
        entry = IterationLog(
            iteration=i,
            test=evaluate(current, test_seqs, spec) if test_seqs is not None else None,
            train=evaluate(current, seqs, spec) if train_metrics else None,
            clamp_events=clamps,
            wall_time=elapsed,
        )
        if callback is not None:
            callback(entry)
        return entry

    logs = [log_entry(0, 0, 0.0)]
    for i in range(1, config.iterations + 1):
        order = rng.permutation(len(data.lengths)).astype(np.int64)
        start = time.perf_counter()
        clamps = _kernel.refine_pass(
            ops, b, q1, data.symbols, data.starts, data.lengths, data.fut, data.fut_starts,
            order, float(config.learning_rate), int(horizon), bool(config.multi_step_average),
            config.grad_norm == "l1_unit", DENOMINATOR_EPS,
        )
        elapsed = time.perf_counter() - start
        if not np.all(np.isfinite(ops)) or np.max(np.abs(ops)) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"operator entries exceeded {DIVERGENCE_LIMIT:g} in pass {i}")
        logs.append(log_entry(i, int(clamps), elapsed))
        log.debug("pass %d: %.2fs, %d clamps", i, elapsed, clamps)
    return snapshot(), logs


def refine_one_step(model: PsrModel, seqs, spec: FeatureSpec, config: RefineConfig,
                    test_seqs=None, train_metrics: bool = False, callback=None):
    """One-step Inference Gradients. Returns ``(model, logs)``; logs[0] is the start."""
    if config.horizon != 1:
        raise InvalidArgumentError("refine_one_step requires horizon == 1")
    return _run(model, seqs, spec, config, 1, test_seqs, train_metrics, callback)


def refine_multi_step(model: PsrModel, seqs, spec: FeatureSpec, config: RefineConfig,
                      test_seqs=None, train_metrics: bool = False, callback=None):
    """Multi-step Inference Gradients with horizon ``config.horizon``.

    Near the end of a sequence the horizon is cut to the number of later
    positions that still have a complete future window.
    """
    return _run(model, seqs, spec, config, config.horizon, test_seqs, train_metrics, callback)


def random_init(spec: FeatureSpec, seqs, seed: int) -> PsrModel:
    """Random operators with data-estimated ``q1`` and ``b_inf``.

    Operator entries are Uniform[0, 1] scaled by ``1 / (alphabet_size * d)``.
    """
    base = two_stage_regression(accumulate_sequences(seqs, spec), spec=spec)
    rng = np.random.default_rng(seed)
    a, d = spec.alphabet_size, spec.future_dim
    ops = rng.uniform(0.0, 1.0, size=(a, d, d)) / (a * d)
    return PsrModel(base.q1, base.b_inf, ops, feature_spec=spec)


def psim_baseline(seqs, spec: FeatureSpec, config: RefineConfig, test_seqs=None,
                  train_metrics: bool = False, callback=None):
    """PSIM-style refinement: one-step Inference Gradients from a random model."""
    if config.init != "random":
        raise InvalidArgumentError("psim_baseline requires init='random'")
    model = random_init(spec, seqs, config.seed)
    return refine_one_step(model, seqs, spec, config, test_seqs, train_metrics, callback)


def reference_refine(model: PsrModel, seqs, spec: FeatureSpec, config: RefineConfig,
                     horizon: Optional[int] = None) -> PsrModel:
    """Direct transcription of the update loop using dense in-place updates.

    Slow; exists so tests can check the compiled pass against it.
    """
    horizon = config.horizon if horizon is None else horizon
    ops = np.array(model.operators, dtype=float)
    work = _Mutable(model.b_inf, ops)
    rng = np.random.default_rng(config.seed)
    k = spec.future_length
    for _ in range(config.iterations):
        for j in rng.permutation(len(seqs)):
            seq = np.asarray(seqs[j])
            fut = future_index_table(seq, spec)
            npos = len(seq) - k
            q = model.q1.copy()
            for t in range(npos):
                hmax = min(horizon, npos - t)
                delta = np.zeros_like(ops[0])
                for h in range(1, hmax + 1):
                    psi = np.zeros(model.d)
                    psi[fut[t + h]] = 1.0
                    delta += multi_step_gradient(work, q, list(seq[t:t + h]), psi, h)
                if config.multi_step_average:
                    delta /= hmax
                if config.grad_norm == "l1_unit":
                    delta = normalize_gradient_l1(delta)
                v = ops[seq[t]] @ q
                q_next = v / clamp_denominator(float(model.b_inf @ v))
                ops[seq[t]] -= config.learning_rate * delta
                q = q_next
    return model.replace(operators=ops)


@dataclass
class _Mutable:
    b_inf: np.ndarray
    operators: np.ndarray = field(repr=False)
