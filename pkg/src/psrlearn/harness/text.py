"""Byte-level text corpora as observation sequences."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import EmptyDataError, InvalidArgumentError


def encode_bytes(data: bytes) -> tuple[np.ndarray, dict[int, int]]:
    """Map each distinct byte to a dense id in order of first appearance."""
    vocab: dict[int, int] = {}
    ids = np.empty(len(data), dtype=np.int64)
    for i, byte in enumerate(data):
        ids[i] = vocab.setdefault(byte, len(vocab))
    return ids, vocab


def decode_ids(ids, vocab: dict[int, int]) -> bytes:
    inverse = {v: k for k, v in vocab.items()}
    return bytes(inverse[int(i)] for i in ids)


def ingest_text(path) -> tuple[np.ndarray, dict[int, int]]:
    data = Path(path).read_bytes()
    if not data:
        raise EmptyDataError(f"{path} is empty")
    return encode_bytes(data)


def write_vocab(vocab: dict[int, int], path) -> None:
    # one line per id: "<id> <byte value>"; bytes are written as integers so
    # whitespace and non-printable characters survive
    lines = [f"{idx} {byte}" for byte, idx in sorted(vocab.items(), key=lambda kv: kv[1])]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vocab(path) -> dict[int, int]:
    vocab = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            idx, byte = line.split()
            vocab[int(byte)] = int(idx)
    return vocab


def sample_excerpt(ids: np.ndarray, length: int, rng: np.random.Generator) -> np.ndarray:
    if length < 1:
        raise InvalidArgumentError("excerpt length must be >= 1")
    if len(ids) < length:
        raise InvalidArgumentError(f"corpus has {len(ids)} symbols, excerpt needs {length}")
    start = int(rng.integers(0, len(ids) - length + 1))
    return ids[start:start + length]


def chunk(ids: np.ndarray, chunk_length: int) -> np.ndarray:
    """Split into non-overlapping rows of ``chunk_length``; a ragged tail is dropped."""
    if chunk_length < 1:
        raise InvalidArgumentError("chunk_length must be >= 1")
    n = len(ids) // chunk_length
    if n == 0:
        raise EmptyDataError("excerpt shorter than one chunk")
    return np.asarray(ids[: n * chunk_length]).reshape(n, chunk_length)


def cap_alphabet(ids: np.ndarray, max_symbols: Optional[int]) -> tuple[np.ndarray, int]:
    """Fold rare symbols into one shared id.

    Keeps the ``max_symbols - 1`` most frequent ids (ties broken by id) and
    maps the rest to a catch-all id; everything is then relabeled densely in
    order of first appearance.  Returns ``(ids, alphabet_size)``.
    """
    ids = np.asarray(ids, dtype=np.int64)
    present = np.unique(ids)
    if max_symbols is None or len(present) <= max_symbols:
        relabeled, vocab = _relabel(ids)
        return relabeled, len(vocab)
    if max_symbols < 2:
        raise InvalidArgumentError("max_symbols must be >= 2")
    counts = np.bincount(ids)
    ranked = sorted(present, key=lambda s: (-counts[s], s))
    keep = set(int(s) for s in ranked[: max_symbols - 1])
    other = int(ids.max()) + 1
    folded = np.array([s if int(s) in keep else other for s in ids], dtype=np.int64)
    relabeled, vocab = _relabel(folded)
    return relabeled, len(vocab)


def _relabel(ids):
    mapping: dict[int, int] = {}
    out = np.array([mapping.setdefault(int(s), len(mapping)) for s in ids], dtype=np.int64)
    return out, mapping
