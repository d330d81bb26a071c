"""Discrete predictive state representations.

A PSR is an initial state ``q1``, a normalizer ``b_inf`` and one linear
operator per observation symbol.  Filtering maps ``q`` to
``B_o q / (b_inf . B_o q)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError, ModelParseError, UnsupportedVersionError
from .features import FeatureSpec

MODEL_FORMAT_VERSION = 1
DENOMINATOR_EPS = 1e-12
PROB_EPS = 1e-300
INVALID_PNLL = -math.log(PROB_EPS)


def clamp_denominator(s: float) -> float:
    """Sign-preserving clamp of a filtering denominator away from zero."""
    if abs(s) >= DENOMINATOR_EPS:
        return s
    return -DENOMINATOR_EPS if s < 0 else DENOMINATOR_EPS


def is_clamped(s: float) -> bool:
    return abs(s) < DENOMINATOR_EPS


@dataclass(frozen=True, eq=False)
class PsrModel:
    """Immutable PSR parameters.

    ``operators`` has shape ``(alphabet_size, d, d)``.  ``q1`` is rescaled on
    construction so that ``b_inf . q1 == 1``.
    """

    q1: np.ndarray
    b_inf: np.ndarray
    operators: np.ndarray
    feature_spec: Optional[FeatureSpec] = None
    rescale_q1: bool = field(default=True, repr=False)

    def __post_init__(self):
        q1 = np.array(self.q1, dtype=float)
        b = np.array(self.b_inf, dtype=float)
        ops = np.array(self.operators, dtype=float)
        if q1.ndim != 1 or b.shape != q1.shape:
            raise InvalidArgumentError("q1 and b_inf must be vectors of equal length")
        d = q1.shape[0]
        if ops.ndim != 3 or ops.shape[1:] != (d, d) or ops.shape[0] < 1:
            raise InvalidArgumentError(f"operators must have shape (A, {d}, {d})")
        for name, arr in (("q1", q1), ("b_inf", b), ("operators", ops)):
            if not np.all(np.isfinite(arr)):
                raise InvalidArgumentError(f"{name} contains non-finite entries")
        if self.feature_spec is not None:
            if self.feature_spec.future_dim != d:
                raise InvalidArgumentError("feature_spec dimension does not match d")
            if self.feature_spec.alphabet_size != ops.shape[0]:
                raise InvalidArgumentError("feature_spec alphabet does not match operators")
        if self.rescale_q1:
            z = float(b @ q1)
            if z == 0.0 or not math.isfinite(z):
                raise InvalidArgumentError("b_inf . q1 is zero; cannot normalize q1")
            q1 = q1 / z
        for arr in (q1, b, ops):
            arr.setflags(write=False)
        object.__setattr__(self, "q1", q1)
        object.__setattr__(self, "b_inf", b)
        object.__setattr__(self, "operators", ops)

    @property
    def d(self) -> int:
        return self.q1.shape[0]

    @property
    def alphabet_size(self) -> int:
        return self.operators.shape[0]

    @cached_property
    def score_matrix(self) -> np.ndarray:
        """Row ``i`` is ``b_inf^T B_i``, so ``score_matrix @ q`` gives all next-symbol scores."""
        w = np.einsum("j,ijk->ik", self.b_inf, self.operators)
        w.setflags(write=False)
        return w

    def replace(self, **changes) -> "PsrModel":
        kw = dict(q1=self.q1, b_inf=self.b_inf, operators=self.operators,
                  feature_spec=self.feature_spec, rescale_q1=False)
        kw.update(changes)
        return PsrModel(**kw)

    def check_symbol(self, o: int) -> int:
        o = int(o)
        if not 0 <= o < self.alphabet_size:
            raise InvalidArgumentError(f"symbol {o} outside alphabet of size {self.alphabet_size}")
        return o


@dataclass
class FilterTrace:
    states: list
    denominators: list
    clamp_events: int = 0


def filter(model: PsrModel, q: np.ndarray, o: int) -> tuple[np.ndarray, float]:
    """One filtering step. Returns the normalized state and the raw denominator.

    Denominators below ``DENOMINATOR_EPS`` in magnitude are clamped for the
    division; callers detect this with :func:`is_clamped`.
    """
    v = model.operators[model.check_symbol(o)] @ q
    s = float(model.b_inf @ v)
    return v / clamp_denominator(s), s


def filter_sequence(model: PsrModel, seq: Sequence[int]) -> FilterTrace:
    q = model.q1
    trace = FilterTrace(states=[q], denominators=[])
    for o in seq:
        q, s = filter(model, q, o)
        trace.states.append(q)
        trace.denominators.append(s)
        trace.clamp_events += is_clamped(s)
    return trace


def propagate(model: PsrModel, q: np.ndarray, window: Sequence[int]) -> tuple[np.ndarray, float]:
    """Apply the window's operators in temporal order, normalizing once."""
    if len(window) == 0:
        raise InvalidArgumentError("window must be non-empty")
    v = np.asarray(q, dtype=float)
    for o in window:
        v = model.operators[model.check_symbol(o)] @ v
    s = float(model.b_inf @ v)
    return v / clamp_denominator(s), s


def one_step_scores(model: PsrModel, q: np.ndarray) -> np.ndarray:
    """Raw (unrectified) next-symbol scores ``b_inf . B_i q``."""
    return model.score_matrix @ q


def pnll_flagged(model: PsrModel, seq: Sequence[int]) -> tuple[float, bool]:
    """``-log(b_inf B_{o_n} ... B_{o_1} q1)`` and whether the product was non-positive.

    The chain is rescaled at every step and the log normalizers accumulated.
    Non-positive products return ``INVALID_PNLL`` with the flag set.
    """
    q = model.q1
    log_abs = 0.0
    negative = False
    for o in seq:
        v = model.operators[model.check_symbol(o)] @ q
        s = float(model.b_inf @ v)
        if s == 0.0 or not math.isfinite(s):
            return INVALID_PNLL, True
        log_abs += math.log(abs(s))
        negative ^= s < 0
        q = v / s
    if negative:
        return INVALID_PNLL, True
    return -log_abs, False


def pnll(model: PsrModel, seq: Sequence[int]) -> float:
    return pnll_flagged(model, seq)[0]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _vec_text(v) -> str:
    return "[" + ", ".join(_fmt(x) for x in v) + "]"


def serialize(model: PsrModel) -> str:
    """JSON text with every float written to 17 significant digits."""
    spec = model.feature_spec.to_dict() if model.feature_spec is not None else None
    ops = ",\n  ".join(
        "[" + ", ".join(_vec_text(row) for row in op) + "]" for op in model.operators
    )
    return (
        "{\n"
        f' "version": {MODEL_FORMAT_VERSION},\n'
        f' "feature_spec": {json.dumps(spec)},\n'
        f' "d": {model.d},\n'
        f' "alphabet_size": {model.alphabet_size},\n'
        f' "q1": {_vec_text(model.q1)},\n'
        f' "b_inf": {_vec_text(model.b_inf)},\n'
        f' "operators": [\n  {ops}\n ]\n'
        "}\n"
    )


_REQUIRED = ("version", "feature_spec", "d", "alphabet_size", "q1", "b_inf", "operators")


def deserialize(text: str) -> PsrModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelParseError(exc.msg, location=f"line {exc.lineno} column {exc.colno}") from exc
    if not isinstance(doc, dict):
        raise ModelParseError("top-level value must be an object", location="$")
    for key in _REQUIRED:
        if key not in doc:
            raise ModelParseError("missing field", location=key)
    if doc["version"] != MODEL_FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"unsupported model format version {doc['version']!r}", location="version"
        )
    d, a = doc["d"], doc["alphabet_size"]
    try:
        q1 = np.array(doc["q1"], dtype=float)
        b = np.array(doc["b_inf"], dtype=float)
        ops = np.array(doc["operators"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelParseError(f"non-numeric array: {exc}", location="q1/b_inf/operators") from exc
    if q1.shape != (d,):
        raise ModelParseError(f"expected length {d}", location="q1")
    if b.shape != (d,):
        raise ModelParseError(f"expected length {d}", location="b_inf")
    if ops.shape != (a, d, d):
        raise ModelParseError(f"expected shape ({a}, {d}, {d})", location="operators")
    spec = None
    if doc["feature_spec"] is not None:
        try:
            spec = FeatureSpec.from_dict(doc["feature_spec"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelParseError(str(exc), location="feature_spec") from exc
    try:
        return PsrModel(q1, b, ops, feature_spec=spec, rescale_q1=False)
    except InvalidArgumentError as exc:
        raise ModelParseError(str(exc), location="$") from exc


def save_model(model: PsrModel, path) -> None:
    Path(path).write_text(serialize(model))


def load_model(path) -> PsrModel:
    return deserialize(Path(path).read_text())
