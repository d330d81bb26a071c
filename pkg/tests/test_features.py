import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psrlearn.errors import EmptyDataError, InvalidArgumentError, WindowError
from psrlearn.features import (
    FeatureSpec,
    decode_index,
    encode_string,
    future_features,
    future_index_table,
    history_features,
    make_training_triples,
    num_positions,
)


def test_dimensions():
    spec = FeatureSpec(20, 2, 2, True)
    assert spec.future_dim == 420
    assert spec.history_dim == 421
    assert FeatureSpec(2, 2, 2, False).history_dim == 6


def test_binary_layout_example():
    spec = FeatureSpec(2, 2)
    # window starting at the first symbol of [1, 0]: strings "1" and "10"
    psi = future_features([1, 0], 0, spec)
    expected = np.zeros(6)
    expected[[1, 4]] = 1
    np.testing.assert_array_equal(psi, expected)


@given(st.integers(1, 5), st.integers(1, 4), st.data())
def test_encode_decode_roundtrip(a, length, data):
    s = data.draw(st.lists(st.integers(0, a - 1), min_size=length, max_size=length))
    assert list(decode_index(encode_string(s, a), a)) == s


def test_encode_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        encode_string([], 3)
    with pytest.raises(InvalidArgumentError):
        encode_string([3], 3)


@settings(max_examples=50)
@given(st.integers(1, 4), st.integers(1, 3), st.data())
def test_one_nonzero_per_length_block(a, k, data):
    spec = FeatureSpec(a, k)
    seq = data.draw(st.lists(st.integers(0, a - 1), min_size=k, max_size=k + 5))
    t = data.draw(st.integers(0, len(seq) - k))
    psi = future_features(seq, t, spec)
    assert psi.sum() == k
    for ell in range(1, k + 1):
        lo = sum(a**m for m in range(1, ell))
        assert psi[lo : lo + a**ell].sum() == 1


def test_future_window_out_of_range():
    spec = FeatureSpec(2, 2)
    with pytest.raises(WindowError):
        future_features([0, 1, 0], 2, spec)
    with pytest.raises(WindowError):
        future_features([0, 1, 0], -1, spec)


def test_history_at_start_is_bias_only():
    h = history_features([0, 1, 1], 0, FeatureSpec(2, 2, 2, True))
    assert h[0] == 1 and h.sum() == 1


def test_history_example():
    spec = FeatureSpec(2, 2, 2, True)
    # history before the third symbol of [0, 1, ...]: "1" and "01"
    h = history_features([0, 1, 1, 0], 2, spec)
    expected = np.zeros(spec.history_dim)
    expected[0] = 1
    expected[1 + encode_string([1], 2)] = 1
    expected[1 + encode_string([0, 1], 2)] = 1
    np.testing.assert_array_equal(h, expected)


def test_history_nonzero_count():
    spec = FeatureSpec(3, 2, 2, True)
    seq = [2, 0, 1, 1, 0]
    for t in range(spec.history_length, len(seq) + 1):
        assert history_features(seq, t, spec).sum() == 1 + spec.history_length


def test_triple_counts_and_chaining():
    spec = FeatureSpec(3, 2)
    seqs = [np.arange(10) % 3, np.array([1, 2, 0, 0, 1, 2, 2, 1, 0, 1])]
    triples = make_training_triples(seqs, spec)
    assert len(triples) == 16
    assert num_positions(10, spec) == 8
    assert len(make_training_triples([[0, 1, 2]], spec)) == 1
    for a, b in zip(triples[:7], triples[1:8]):
        np.testing.assert_array_equal(a.psi_next, b.psi_now)
    with pytest.raises(EmptyDataError):
        make_training_triples([[0, 1]], spec)


def test_index_table_matches_dense_features():
    spec = FeatureSpec(4, 3)
    rng = np.random.default_rng(0)
    batch = rng.integers(0, 4, size=(5, 9))
    table = future_index_table(batch, spec)
    assert table.shape == (5, 7, 3)
    for i in range(5):
        for t in range(7):
            assert set(np.flatnonzero(future_features(batch[i], t, spec))) == set(table[i, t])
