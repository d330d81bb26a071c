import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psrlearn.errors import InvalidArgumentError, ModelParseError, UnsupportedVersionError
from psrlearn.features import FeatureSpec
from psrlearn.psr import (
    DENOMINATOR_EPS,
    INVALID_PNLL,
    PsrModel,
    deserialize,
    filter,
    filter_sequence,
    is_clamped,
    one_step_scores,
    pnll,
    pnll_flagged,
    propagate,
    serialize,
)

from conftest import deterministic_psr, random_psr


def test_scalar_model_normalizes_away_the_operator():
    for c in (0.3, -2.0, 7.5):
        m = PsrModel(np.ones(1), np.ones(1), np.full((1, 1, 1), c))
        q, s = filter(m, np.ones(1), 0)
        np.testing.assert_allclose(q, [1.0])
        assert s == c


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.sampled_from([0.1, 2.0, 10.0]))
def test_filter_scale_invariant(seed, c):
    m = random_psr(5, 3, seed)
    q = np.random.default_rng(seed).uniform(0.1, 1, 5)
    a, _ = filter(m, q, 1)
    b, _ = filter(m, c * q, 1)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_trace_length_and_normalization():
    m = random_psr(4, 2, 3)
    trace = filter_sequence(m, [0, 1, 1, 0, 1])
    assert len(trace.states) == 6 and len(trace.denominators) == 5
    for q in trace.states:
        assert m.b_inf @ q == pytest.approx(1, abs=1e-12)


def test_bad_symbol_and_shapes():
    m = random_psr(3, 2, 0)
    with pytest.raises(InvalidArgumentError):
        filter(m, m.q1, 2)
    with pytest.raises(InvalidArgumentError):
        PsrModel(np.ones(3), np.ones(3), np.ones((2, 3, 2)))
    with pytest.raises(InvalidArgumentError):
        PsrModel(np.ones(2), np.ones(2), np.ones((3, 2, 2)), feature_spec=FeatureSpec(2, 1))


def test_propagate_matches_repeated_filter():
    m = random_psr(6, 3, 4)
    q = m.q1
    one, _ = propagate(m, q, [2])
    np.testing.assert_allclose(one, filter(m, q, 2)[0], rtol=1e-14)
    two, _ = propagate(m, q, [0, 2])
    step = filter(m, filter(m, q, 0)[0], 2)[0]
    np.testing.assert_allclose(two, step, atol=1e-10)
    np.testing.assert_allclose(propagate(deterministic_psr(), np.ones(1), [0, 0, 0])[0], [1.0])


def test_scores():
    np.testing.assert_allclose(one_step_scores(deterministic_psr(), np.ones(1)), [1.0])
    m = random_psr(4, 3, 1)
    expected = [m.b_inf @ m.operators[i] @ m.q1 for i in range(3)]
    np.testing.assert_allclose(one_step_scores(m, m.q1), expected, rtol=1e-13)


def test_clamping_is_reported():
    ops = np.zeros((2, 2, 2))
    ops[0] = np.eye(2)
    m = PsrModel(np.array([1.0, 0.0]), np.array([1.0, 1.0]), ops)
    q, s = filter(m, m.q1, 1)
    assert s == 0.0 and is_clamped(s) and np.all(q == 0)
    assert filter_sequence(m, [0, 1, 0]).clamp_events == 2
    assert not is_clamped(DENOMINATOR_EPS)


def test_pnll_deterministic_and_invalid():
    assert pnll(deterministic_psr(), [0, 0, 0]) == 0.0
    m = PsrModel(np.ones(1), np.ones(1), np.full((2, 1, 1), -0.5))
    value, bad = pnll_flagged(m, [0])
    assert bad and value == INVALID_PNLL
    value, bad = pnll_flagged(m, [0, 1])  # (-0.5)^2 > 0
    assert not bad and value == pytest.approx(-math.log(0.25))


def test_pnll_independent_of_rescaling():
    m = random_psr(5, 3, 9)
    seq = [0, 2, 1, 1, 2, 0, 0]
    v = m.q1
    for o in seq:
        v = m.operators[o] @ v
    direct = -math.log(m.b_inf @ v)
    assert pnll(m, seq) == pytest.approx(direct, abs=1e-9)


def test_serialize_roundtrip_bit_exact():
    m = random_psr(4, 3, 2).replace(feature_spec=None)
    back = deserialize(serialize(m))
    for a, b in ((m.q1, back.q1), (m.b_inf, back.b_inf), (m.operators, back.operators)):
        assert np.array_equal(a, b)
    assert serialize(back) == serialize(m)


def test_parse_errors_name_the_field():
    doc = json.loads(serialize(random_psr(2, 2, 0)))
    del doc["b_inf"]
    with pytest.raises(ModelParseError) as err:
        deserialize(json.dumps(doc))
    assert err.value.location == "b_inf"
    doc = json.loads(serialize(random_psr(2, 2, 0)))
    doc["version"] = 99
    with pytest.raises(UnsupportedVersionError):
        deserialize(json.dumps(doc))
    with pytest.raises(ModelParseError):
        deserialize("{not json")
    doc = json.loads(serialize(random_psr(2, 2, 0)))
    doc["q1"] = [1.0]
    with pytest.raises(ModelParseError) as err:
        deserialize(json.dumps(doc))
    assert err.value.location == "q1"
