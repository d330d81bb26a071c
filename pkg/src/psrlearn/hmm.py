"""Discrete HMMs: ring-topology generator, sampler, and exact oracles.

Matrices are column-stochastic: ``transition[j, i] = P(s' = j | s = i)`` and
``emission[o, i] = P(o | s = i)``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyDataError,
    InvalidArgumentError,
    ModelParseError,
    UnsupportedVersionError,
    ZeroProbabilityHistoryError,
)
from .features import FeatureSpec

HMM_FORMAT_VERSION = 1
_STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class HmmModel:
    transition: np.ndarray
    emission: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        t = np.array(self.transition, dtype=float)
        e = np.array(self.emission, dtype=float)
        p = np.array(self.initial, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise InvalidArgumentError("transition must be square")
        if e.ndim != 2 or e.shape[1] != t.shape[0]:
            raise InvalidArgumentError("emission must be num_obs x num_states")
        if p.shape != (t.shape[0],):
            raise InvalidArgumentError("initial must have length num_states")
        for name, m in (("transition", t), ("emission", e), ("initial", p)):
            if np.any(m < 0) or np.any(m > 1) or not np.all(np.isfinite(m)):
                raise InvalidArgumentError(f"{name} entries must lie in [0, 1]")
            if np.any(np.abs(m.sum(axis=0) - 1.0) > _STOCHASTIC_TOL):
                raise InvalidArgumentError(f"{name} columns must sum to 1")
        for m in (t, e, p):
            m.setflags(write=False)
        object.__setattr__(self, "transition", t)
        object.__setattr__(self, "emission", e)
        object.__setattr__(self, "initial", p)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_obs(self) -> int:
        return self.emission.shape[0]

    def with_initial(self, initial: np.ndarray) -> "HmmModel":
        return HmmModel(self.transition, self.emission, initial)

    def to_dict(self) -> dict:
        return {
            "version": HMM_FORMAT_VERSION,
            "num_states": self.num_states,
            "num_obs": self.num_obs,
            "transition": self.transition.tolist(),
            "emission": self.emission.tolist(),
            "initial": self.initial.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HmmModel":
        for key in ("version", "num_states", "num_obs", "transition", "emission", "initial"):
            if key not in doc:
                raise ModelParseError("missing field", location=key)
        if doc["version"] != HMM_FORMAT_VERSION:
            raise UnsupportedVersionError(
                f"unsupported HMM format version {doc['version']!r}", location="version"
            )
        hmm = cls(
            np.array(doc["transition"], dtype=float),
            np.array(doc["emission"], dtype=float),
            np.array(doc["initial"], dtype=float),
        )
        if hmm.num_states != doc["num_states"] or hmm.num_obs != doc["num_obs"]:
            raise ModelParseError("declared sizes disagree with matrices", location="num_states")
        return hmm


def save_hmm(hmm: HmmModel, path) -> None:
    Path(path).write_text(json.dumps(hmm.to_dict(), indent=1))


def load_hmm(path) -> HmmModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelParseError(str(exc), location=f"line {exc.lineno}") from exc
    return HmmModel.from_dict(doc)


def _normalize(x: np.ndarray) -> np.ndarray:
    s = x.sum(axis=0)
    # Uniform draws are zero with probability ~2^-53; keep columns valid anyway.
    s = np.where(s > 0, s, 1.0)
    return x / s


def generate_ring_hmm(num_states: int, num_obs: int, seed: int) -> HmmModel:
    """Random ring-topology HMM.

    Each state moves to itself or one of its two ring neighbours and emits
    one of two distinct symbols (one symbol if ``num_obs == 1``).  Nonzero
    weights are Uniform[0, 1] draws normalized per column.
    """
    if num_states < 1 or num_obs < 1:
        raise InvalidArgumentError("num_states and num_obs must be >= 1")
    rng = np.random.default_rng(seed)
    n = num_states

    transition = np.zeros((n, n))
    for i in range(n):
        targets = sorted({(i - 1) % n, i, (i + 1) % n})
        transition[targets, i] = rng.uniform(0.0, 1.0, size=len(targets))

    per_state = min(2, num_obs)
    emission = np.zeros((num_obs, n))
    for i in range(n):
        symbols = rng.choice(num_obs, size=per_state, replace=False)
        emission[symbols, i] = rng.uniform(0.0, 1.0, size=per_state)

    initial = rng.uniform(0.0, 1.0, size=n)
    return HmmModel(_normalize(transition), _normalize(emission), _normalize(initial))


def random_dense_hmm(num_states: int, num_obs: int, seed: int) -> HmmModel:
    """Fully dense random HMM, used by tests and small consistency checks."""
    rng = np.random.default_rng(seed)
    return HmmModel(
        _normalize(rng.uniform(0.1, 1.0, size=(num_states, num_states))),
        _normalize(rng.uniform(0.1, 1.0, size=(num_obs, num_states))),
        _normalize(rng.uniform(0.1, 1.0, size=num_states)),
    )


def stationary_distribution(hmm: HmmModel) -> np.ndarray:
    vals, vecs = np.linalg.eig(hmm.transition)
    i = int(np.argmin(np.abs(vals - 1.0)))
    v = np.real(vecs[:, i])
    v = np.abs(v) / np.abs(v).sum()
    return v


def sample_sequences(hmm: HmmModel, num_sequences: int, length: int, seed: int) -> np.ndarray:
    """Ancestral sampling. Returns an ``(num_sequences, length)`` int array."""
    if length < 1 or num_sequences < 0:
        raise InvalidArgumentError("length must be >= 1 and num_sequences >= 0")
    rng = np.random.default_rng(seed)
    trans_cdf = np.cumsum(hmm.transition, axis=0)
    emit_cdf = np.cumsum(hmm.emission, axis=0)
    init_cdf = np.cumsum(hmm.initial)

    def draw(cdf_columns, u):
        # cdf_columns: (K, N) per-sample CDF columns
        idx = (u[None, :] > cdf_columns).sum(axis=0)
        return np.minimum(idx, cdf_columns.shape[0] - 1)

    out = np.empty((num_sequences, length), dtype=np.int64)
    states = np.minimum(np.searchsorted(init_cdf, rng.random(num_sequences), side="right"),
                        hmm.num_states - 1)
    for t in range(length):
        out[:, t] = draw(emit_cdf[:, states], rng.random(num_sequences))
        if t + 1 < length:
            states = draw(trans_cdf[:, states], rng.random(num_sequences))
    return out


def _check_sequence(hmm: HmmModel, seq: Sequence[int]) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.int64)
    if arr.ndim != 1:
        raise InvalidArgumentError("sequence must be one-dimensional")
    if arr.size and (arr.min() < 0 or arr.max() >= hmm.num_obs):
        raise InvalidArgumentError("symbol outside alphabet")
    return arr


def belief_after(hmm: HmmModel, history: Sequence[int], initial=None) -> np.ndarray:
    """P(s_t | o_{1:t-1}) after conditioning on ``history``."""
    b = np.array(hmm.initial if initial is None else initial, dtype=float)
    for o in _check_sequence(hmm, history):
        b = hmm.emission[o] * b
        z = b.sum()
        if z <= 0:
            raise ZeroProbabilityHistoryError("history has probability zero")
        b = hmm.transition @ (b / z)
    return b


def future_string_matrix(hmm: HmmModel, spec: FeatureSpec) -> np.ndarray:
    """``F[c, s]`` = probability of the string at coordinate ``c`` starting in state ``s``."""
    if spec.alphabet_size != hmm.num_obs:
        raise InvalidArgumentError("feature alphabet does not match the HMM")
    n = hmm.num_states
    rows = []
    # prev[w] holds P(w | s) for all strings w of the previous length, in layout order.
    prev = np.ones((1, n))
    for _ in range(spec.future_length):
        # P(o w | s) = E[o, s] * sum_s' T[s', s] P(w | s')
        cont = prev @ hmm.transition
        cur = (hmm.emission[:, None, :] * cont[None, :, :]).reshape(-1, n)
        rows.append(cur)
        prev = cur
    return np.vstack(rows)


def exact_future_expectation(
    hmm: HmmModel, history: Sequence[int], spec: FeatureSpec
) -> np.ndarray:
    """E[psi_t | o_{1:t-1} = history] by forward filtering and exact enumeration."""
    return future_string_matrix(hmm, spec) @ belief_after(hmm, history)


def sequence_log_prob(hmm: HmmModel, seq: Sequence[int]) -> float:
    """log P(seq); returns ``-inf`` (never NaN) for impossible sequences."""
    arr = _check_sequence(hmm, seq)
    b = hmm.initial.copy()
    logp = 0.0
    for o in arr:
        b = hmm.emission[o] * b
        z = b.sum()
        if z <= 0:
            return -math.inf
        logp += math.log(z)
        b = hmm.transition @ (b / z)
    return logp


def all_strings(alphabet_size: int, length: int) -> Iterable[tuple[int, ...]]:
    return itertools.product(range(alphabet_size), repeat=length)


def write_sequences(seqs: Iterable[Sequence[int]], path) -> None:
    with open(path, "w") as fh:
        for seq in seqs:
            fh.write(" ".join(str(int(s)) for s in seq))
            fh.write("\n")


def read_sequences(path) -> list[np.ndarray]:
    seqs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                seqs.append(np.array([int(p) for p in parts], dtype=np.int64))
            except ValueError as exc:
                raise InvalidArgumentError(f"{path}:{lineno}: {exc}") from exc
    if not seqs:
        raise EmptyDataError(f"{path} contains no sequences")
    return seqs
