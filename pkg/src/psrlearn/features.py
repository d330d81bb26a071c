"""Indicator features over short observation strings.

Coordinates are laid out by string length (ascending) and, within one
length, lexicographically with the leftmost (oldest) symbol most
significant.  For alphabet ``{0, 1}`` and ``k = 2`` the future layout is::

    "0" "1" "00" "01" "10" "11"
     0   1   2    3    4    5

History vectors use the same layout, preceded by a constant bias
coordinate when ``history_bias`` is set.

Positions are 0-based throughout: ``future_features(seq, t, spec)`` encodes
``seq[t:t+k]`` and ``history_features(seq, t, spec)`` encodes the strings
ending at ``seq[t-1]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyDataError, InvalidArgumentError, WindowError


@dataclass(frozen=True)
class FeatureSpec:
    alphabet_size: int
    future_length: int = 2
    history_length: int = 2
    history_bias: bool = True

    def __post_init__(self):
        if self.alphabet_size < 1:
            raise InvalidArgumentError("alphabet_size must be >= 1")
        if self.future_length < 1:
            raise InvalidArgumentError("future_length must be >= 1")
        if self.history_length < 0:
            raise InvalidArgumentError("history_length must be >= 0")

    @property
    def k(self) -> int:
        return self.future_length

    @property
    def future_dim(self) -> int:
        return _block_offset(self.alphabet_size, self.future_length + 1)

    @property
    def history_dim(self) -> int:
        return int(self.history_bias) + _block_offset(
            self.alphabet_size, self.history_length + 1
        )

    def to_dict(self) -> dict:
        return {
            "alphabet_size": self.alphabet_size,
            "future_length": self.future_length,
            "history_length": self.history_length,
            "history_bias": self.history_bias,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(
            alphabet_size=int(d["alphabet_size"]),
            future_length=int(d.get("future_length", 2)),
            history_length=int(d.get("history_length", 2)),
            history_bias=bool(d.get("history_bias", True)),
        )


def _block_offset(alphabet_size: int, length: int) -> int:
    """Index of the first coordinate of strings of ``length`` (1-based)."""
    return sum(alphabet_size**m for m in range(1, length))


def encode_string(symbols: Sequence[int], alphabet_size: int) -> int:
    """Coordinate of a non-empty string in the future-feature layout."""
    if len(symbols) == 0:
        raise InvalidArgumentError("cannot encode the empty string")
    idx = 0
    for s in symbols:
        if not 0 <= s < alphabet_size:
            raise InvalidArgumentError(f"symbol {s} outside alphabet")
        idx = idx * alphabet_size + int(s)
    return _block_offset(alphabet_size, len(symbols)) + idx


def decode_index(index: int, alphabet_size: int) -> tuple[int, ...]:
    """Inverse of :func:`encode_string`."""
    if index < 0:
        raise InvalidArgumentError("negative index")
    length = 1
    while index >= alphabet_size**length:
        index -= alphabet_size**length
        length += 1
    out = []
    for _ in range(length):
        index, r = divmod(index, alphabet_size)
        out.append(r)
    return tuple(reversed(out))


def future_features(seq: Sequence[int], t: int, spec: FeatureSpec) -> np.ndarray:
    k = spec.future_length
    if t < 0 or t + k > len(seq):
        raise WindowError(
            f"future window [{t}, {t + k}) out of range for length {len(seq)}"
        )
    out = np.zeros(spec.future_dim)
    for ell in range(1, k + 1):
        out[encode_string(seq[t : t + ell], spec.alphabet_size)] = 1.0
    return out


def history_features(seq: Sequence[int], t: int, spec: FeatureSpec) -> np.ndarray:
    if t < 0 or t > len(seq):
        raise WindowError(f"history position {t} out of range for length {len(seq)}")
    out = np.zeros(spec.history_dim)
    bias = int(spec.history_bias)
    if spec.history_bias:
        out[0] = 1.0
    for ell in range(1, spec.history_length + 1):
        if t - ell < 0:
            break
        out[bias + encode_string(seq[t - ell : t], spec.alphabet_size)] = 1.0
    return out


@dataclass(frozen=True)
class TrainingTriple:
    """One regression example: history, observation, current and next future."""

    h: np.ndarray
    o: int
    psi_now: np.ndarray
    psi_next: np.ndarray


def num_positions(length: int, spec: FeatureSpec) -> int:
    """Positions in a sequence where both psi_t and psi_{t+1} are complete."""
    return max(0, length - spec.future_length)


def make_training_triples(
    seqs: Sequence[Sequence[int]], spec: FeatureSpec
) -> list[TrainingTriple]:
    triples = []
    for seq in seqs:
        for t in range(num_positions(len(seq), spec)):
            triples.append(
                TrainingTriple(
                    h=history_features(seq, t, spec),
                    o=int(seq[t]),
                    psi_now=future_features(seq, t, spec),
                    psi_next=future_features(seq, t + 1, spec),
                )
            )
    if not triples:
        raise EmptyDataError(
            f"no sequence is longer than future_length={spec.future_length}"
        )
    return triples


def future_index_table(seq: np.ndarray, spec: FeatureSpec) -> np.ndarray:
    """Nonzero coordinates of psi_t for every complete window of ``seq``.

    For a 1-D sequence returns an integer array of shape
    ``(len(seq) - k + 1, k)`` whose row ``t`` lists the ``k`` coordinates set
    in ``future_features(seq, t)``.  Leading axes of ``seq`` (a batch of
    equal-length sequences) are carried through.
    """
    seq = np.asarray(seq, dtype=np.int64)
    k = spec.future_length
    a = spec.alphabet_size
    n = seq.shape[-1] - k + 1
    if n <= 0:
        return np.zeros(seq.shape[:-1] + (0, k), dtype=np.int64)
    out = np.empty(seq.shape[:-1] + (n, k), dtype=np.int64)
    code = np.zeros(seq.shape[:-1] + (n,), dtype=np.int64)
    for ell in range(1, k + 1):
        code = code * a + seq[..., ell - 1 : ell - 1 + n]
        out[..., ell - 1] = _block_offset(a, ell) + code
    return out
