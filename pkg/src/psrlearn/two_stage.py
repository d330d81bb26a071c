"""Two-stage regression (2SR) initialization of a PSR from feature moments."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DegenerateMomentsError, EmptyDataError, InvalidArgumentError, ResourceLimitError
from .features import FeatureSpec, TrainingTriple, future_index_table, num_positions
from .hmm import HmmModel, future_string_matrix, stationary_distribution
from .psr import PsrModel

DEFAULT_RIDGE = 1e-6
DEFAULT_REL_TOL = 1e-10


@dataclass
class MomentAccumulators:
    """Summed feature moments over ``count`` training positions.

    ``cross`` is sum(psi_t h_t^T); ``cross_obs[i]`` is
    sum(1[o_t = i] psi_{t+1} h_t^T).
    """

    sum_psi: np.ndarray
    cross: np.ndarray
    cross_obs: np.ndarray
    sum_h: np.ndarray
    count: float

    def __add__(self, other: "MomentAccumulators") -> "MomentAccumulators":
        return MomentAccumulators(
            self.sum_psi + other.sum_psi,
            self.cross + other.cross,
            self.cross_obs + other.cross_obs,
            self.sum_h + other.sum_h,
            self.count + other.count,
        )

    @property
    def alphabet_size(self) -> int:
        return self.cross_obs.shape[0]

    @classmethod
    def zeros(cls, spec: FeatureSpec) -> "MomentAccumulators":
        d, dh, a = spec.future_dim, spec.history_dim, spec.alphabet_size
        return cls(np.zeros(d), np.zeros((d, dh)), np.zeros((a, d, dh)), np.zeros(dh), 0)


def accumulate(triples: Sequence[TrainingTriple], alphabet_size: Optional[int] = None) -> MomentAccumulators:
    """Single pass over dense training triples."""
    if len(triples) == 0:
        raise EmptyDataError("no training triples")
    d = triples[0].psi_now.shape[0]
    dh = triples[0].h.shape[0]
    if alphabet_size is None:
        alphabet_size = max(tr.o for tr in triples) + 1
    acc = MomentAccumulators(
        np.zeros(d), np.zeros((d, dh)), np.zeros((alphabet_size, d, dh)), np.zeros(dh), 0
    )
    for tr in triples:
        acc.sum_psi += tr.psi_now
        acc.cross += np.outer(tr.psi_now, tr.h)
        acc.cross_obs[tr.o] += np.outer(tr.psi_next, tr.h)
        acc.sum_h += tr.h
        acc.count += 1
    return acc


def _history_index_table(seq: np.ndarray, spec: FeatureSpec) -> list[list[int]]:
    a = spec.alphabet_size
    bias = int(spec.history_bias)
    rows = []
    for t in range(num_positions(len(seq), spec)):
        idx = [0] if bias else []
        code = 0
        for ell in range(1, spec.history_length + 1):
            if t - ell < 0:
                break
            code = code + int(seq[t - ell]) * a ** (ell - 1)
            offset = sum(a**m for m in range(1, ell))
            idx.append(bias + offset + code)
        rows.append(idx)
    return rows


def accumulate_sequences(seqs: Sequence[Sequence[int]], spec: FeatureSpec) -> MomentAccumulators:
    """Same sums as ``accumulate(make_training_triples(seqs, spec))`` without
    materializing dense feature vectors."""
    d, dh, a = spec.future_dim, spec.history_dim, spec.alphabet_size
    psi_rows, h_rows, obs, next_rows = [], [], [], []
    for seq in seqs:
        seq = np.asarray(seq, dtype=np.int64)
        n = num_positions(len(seq), spec)
        if n == 0:
            continue
        fut = future_index_table(seq, spec)
        hist = _history_index_table(seq, spec)
        for t in range(n):
            psi_rows.append(fut[t])
            next_rows.append(fut[t + 1])
            h_rows.append(hist[t])
            obs.append(seq[t])
    if not psi_rows:
        raise EmptyDataError(f"no sequence is longer than future_length={spec.future_length}")

    cross = np.zeros(d * dh)
    cross_obs = np.zeros(a * d * dh)
    sum_h = np.zeros(dh)
    pairs, pairs_obs = [], []
    for psi, nxt, h, o in zip(psi_rows, next_rows, h_rows, obs):
        h = np.asarray(h)
        sum_h[h] += 1
        pairs.append((psi[:, None] * dh + h[None, :]).ravel())
        pairs_obs.append(((o * d + nxt)[:, None] * dh + h[None, :]).ravel())
    cross += np.bincount(np.concatenate(pairs), minlength=d * dh)
    cross_obs += np.bincount(np.concatenate(pairs_obs), minlength=a * d * dh)
    sum_psi = np.bincount(np.concatenate(psi_rows), minlength=d).astype(float)
    return MomentAccumulators(
        sum_psi, cross.reshape(d, dh), cross_obs.reshape(a, d, dh), sum_h, len(psi_rows)
    )


def pinv_ridge(m: np.ndarray, lam: float = 0.0, rel_tol: float = DEFAULT_REL_TOL,
               rank: Optional[int] = None) -> np.ndarray:
    """Regularized pseudoinverse.

    ``lam == 0`` gives the truncated-SVD Moore-Penrose inverse, dropping
    singular values below ``rel_tol * sigma_max``.  ``lam > 0`` shrinks each
    singular value to ``sigma / (sigma**2 + lam)``, which equals
    ``M^T (M M^T + lam I)^-1``.  ``rank`` keeps only the leading singular
    triplets.
    """
    m = np.asarray(m, dtype=float)
    if lam < 0:
        raise InvalidArgumentError("lam must be >= 0")
    if not np.all(np.isfinite(m)):
        raise InvalidArgumentError("matrix has non-finite entries")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(m.T.shape)
    keep = s > rel_tol * s[0] if lam == 0 else s > 0
    if rank is not None:
        keep[rank:] = False
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep] if lam == 0 else s[keep] / (s[keep] ** 2 + lam)
    return (vt.T * inv) @ u.T


def _as_moments(data, spec: Optional[FeatureSpec]) -> MomentAccumulators:
    if isinstance(data, MomentAccumulators):
        return data
    triples = list(data)
    return accumulate(triples, spec.alphabet_size if spec is not None else None)


def two_stage_regression(
    data: Union[Sequence[TrainingTriple], MomentAccumulators],
    lam: Optional[float] = None,
    rank: Optional[int] = None,
    spec: Optional[FeatureSpec] = None,
    ridge: float = DEFAULT_RIDGE,
) -> PsrModel:
    """Estimate ``(q1, b_inf, {B_i})`` from training triples or summed moments.

    ``lam=None`` selects ``ridge * trace(C C^T)`` for the cross moment ``C``.
    """
    acc = _as_moments(data, spec)
    if acc.count < 1:
        raise EmptyDataError("no training positions")
    cross = acc.cross
    if not np.any(cross):
        raise DegenerateMomentsError("cross moment sum(psi h^T) is identically zero")
    if rank is not None and not 1 <= rank <= min(cross.shape):
        raise InvalidArgumentError(f"rank must lie in [1, {min(cross.shape)}]")
    if lam is None:
        lam = ridge * float(np.sum(cross**2))
    inv = pinv_ridge(cross, lam, rank=rank)
    q1 = acc.sum_psi / acc.count
    operators = acc.cross_obs @ inv
    b_inf = acc.sum_h @ inv
    return PsrModel(q1, b_inf, operators, feature_spec=spec)


def exact_moments(
    hmm: HmmModel,
    spec: FeatureSpec,
    history_length_cap: int,
    initial: Optional[np.ndarray] = None,
    max_histories: int = 2_000_000,
) -> MomentAccumulators:
    """Population moments summed over positions ``0 .. cap-1``.

    Histories are enumerated exactly.  The process starts from the
    stationary distribution unless ``initial`` is given, so that the mean
    future feature is the same at every position.
    """
    if history_length_cap < 1:
        raise InvalidArgumentError("history_length_cap must be >= 1")
    a = hmm.num_obs
    total = sum(a**t for t in range(history_length_cap))
    if total > max_histories:
        raise ResourceLimitError(f"{total} histories exceed the enumeration cap {max_histories}")
    f = future_string_matrix(hmm, spec)
    start = stationary_distribution(hmm) if initial is None else np.asarray(initial, float)
    acc = MomentAccumulators.zeros(spec)
    bias = int(spec.history_bias)

    # Unnormalized forward vectors: column j is P(s_t, history_j).
    alpha = start[:, None]
    hists = np.zeros((1, 0), dtype=np.int64)
    for t in range(history_length_cap):
        n_hist = alpha.shape[1]
        h = np.zeros((spec.history_dim, n_hist))
        if bias:
            h[0] = 1.0
        code = np.zeros(n_hist, dtype=np.int64)
        for ell in range(1, spec.history_length + 1):
            if t - ell < 0:
                break
            code = code + hists[:, t - ell] * a ** (ell - 1)
            offset = sum(a**m for m in range(1, ell))
            h[bias + offset + code, np.arange(n_hist)] = 1.0
        psi = f @ alpha  # E[psi_t ; history] per column, unnormalized by P(history)
        acc.sum_psi += psi.sum(axis=1)
        acc.cross += psi @ h.T
        acc.sum_h += h @ alpha.sum(axis=0)
        nxt = []
        for i in range(a):
            moved = hmm.transition @ (hmm.emission[i][:, None] * alpha)
            acc.cross_obs[i] += (f @ moved) @ h.T
            nxt.append(moved)
        acc.count += 1
        if t + 1 < history_length_cap:
            alpha = np.concatenate(nxt, axis=1)
            hists = np.concatenate(
                [np.column_stack([hists, np.full(n_hist, i)]) for i in range(a)], axis=0
            )
    return acc
