"""Alignment metrics between encoder rows and dictionary columns."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ssl_lab.data import generate_dictionary
from ssl_lab.errors import (DegenerateInputError, DimensionError,
                            ParameterError)
from ssl_lab.metrics import max_cosine_stats, support_separation


@given(st.integers(1, 8), st.integers(1, 10), st.integers(0, 2 ** 31))
def test_stats_ordered_and_bounded(d, m, seed):
    rng = np.random.default_rng(seed)
    M = generate_dictionary(d + 2, d, "qr_gaussian", rng)
    W = rng.standard_normal((m, d + 2))
    stats = max_cosine_stats(W, M)
    assert stats.per_column.shape == (d,)
    assert 0.0 <= stats.min <= stats.median <= stats.max <= 1.0 + 1e-12


def test_median_is_lower_median():
    M = np.eye(4)
    # rows aligned with columns at known cosines 0.1 < 0.2 < 0.3 < 0.9
    W = np.eye(4)
    stats = max_cosine_stats(W, M)
    assert stats.min == stats.median == stats.max == pytest.approx(1.0)
    # craft distinct per-column values: one row per column, entries scaled
    # off-axis so the absolute cosine differs per column
    W = np.array([
        [1.0, 0.0, 0.0, 3.0],
        [0.0, 1.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.3],
        [0.0, 0.0, 0.0, 1.0],
    ])
    stats = max_cosine_stats(W, M)
    srt = np.sort(stats.per_column)
    assert stats.median == srt[(4 - 1) // 2] == srt[1]


def test_perfect_recovery_is_one():
    M = generate_dictionary(6, 3, "qr_gaussian", 0)
    stats = max_cosine_stats(M.entries.T, M)
    assert stats.min >= 1.0 - 1e-12


def test_invariance_perm_sign_scale(rng):
    M = generate_dictionary(7, 4, "qr_gaussian", 5)
    W = rng.standard_normal((6, 7))
    base = max_cosine_stats(W, M).per_column

    perm = rng.permutation(6)
    signs = rng.choice([-1.0, 1.0], size=6)
    scales = rng.uniform(0.1, 9.0, size=6)
    W2 = (W[perm] * signs[:, None]) * scales[:, None]
    again = max_cosine_stats(W2, M).per_column
    assert np.max(np.abs(base - again)) <= 1e-12


def test_extra_rows_never_hurt(rng):
    M = generate_dictionary(5, 3, "qr_gaussian", 9)
    W = rng.standard_normal((4, 5))
    base = max_cosine_stats(W, M).per_column
    more = max_cosine_stats(np.vstack([W, rng.standard_normal((3, 5))]), M)
    assert (more.per_column >= base - 1e-15).all()


def test_metric_validation(rng):
    M = generate_dictionary(5, 3, "qr_gaussian", 1)
    with pytest.raises(DegenerateInputError):
        max_cosine_stats(np.zeros((2, 5)), M)
    with pytest.raises(DimensionError):
        max_cosine_stats(np.ones((2, 4)), M)
    # raw ndarray dictionaries are validated for orthonormal columns
    with pytest.raises(DegenerateInputError):
        max_cosine_stats(np.ones((2, 3)), np.ones((3, 2)))


def test_support_separation_identity():
    M = np.eye(3)
    W = np.array([[1.0, 0.1, 0.0],
                  [0.0, 1.0, 0.0],
                  [0.2, 0.0, 1.0]])
    margins = support_separation(W, M)
    rows = W / np.linalg.norm(W, axis=1, keepdims=True)
    expected = [rows[0, 0] - 0.1 / np.linalg.norm(W[0]),
                1.0,
                rows[2, 2] - 0.2 / np.linalg.norm(W[2])]
    assert np.allclose(margins, expected)
    assert (margins > 0).all()


def test_support_separation_explicit_sets():
    M = np.eye(3)
    W = np.array([[0.8, 0.6, 0.0]])
    # support {0, 1}: inside min is 0.6, outside max is 0
    margins = support_separation(W, M, support_sets=[[0, 1]])
    assert margins[0] == pytest.approx(0.6)
    # full support: outside part is empty -> 0, inside min hits the 0 entry
    margins = support_separation(W, M, support_sets=[[0, 1, 2]])
    assert margins[0] == pytest.approx(0.0)
    # wrong support makes the margin negative
    margins = support_separation(W, M, support_sets=[[2]])
    assert margins[0] < 0


def test_support_separation_sign_matters():
    # inside uses the signed inner product: an anti-aligned neuron is penalized
    M = np.eye(2)
    W = np.array([[-1.0, 0.0]])
    margins = support_separation(W, M, support_sets=[[0]])
    assert margins[0] == pytest.approx(-1.0)


def test_support_separation_validation():
    M = np.eye(3)
    W = np.ones((2, 3))
    with pytest.raises(DimensionError):
        support_separation(W, M, support_sets=[[0]])
    with pytest.raises(ParameterError):
        support_separation(W, M, support_sets=[[0], []])
    with pytest.raises(ParameterError):
        support_separation(W, M, support_sets=[[0], [3]])
