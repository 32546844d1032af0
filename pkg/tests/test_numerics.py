import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from imlekit.numerics import (
    DimensionMismatch, NonFiniteValue, RngStream, as_vec, finite_diff_grad,
    gaussian_sample, pairwise_sq_dists, sq_dists_to, sq_euclidean,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_gaussian_sample_moments():
    x = gaussian_sample(RngStream(7), 1)
    assert x.shape == (1,)
    draws = RngStream(7, 1).normal(10**6)
    assert abs(draws.mean()) < 0.01
    assert abs(draws.var() - 1.0) < 0.02
    n = draws.size
    assert abs(draws.mean()) < 4 / math.sqrt(n)
    assert abs(draws.var() - 1.0) < 5 * math.sqrt(2 / n)


def test_streams_reproducible_and_independent():
    a = RngStream(99, 3).normal(100)
    b = RngStream(99, 3).normal(100)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, RngStream(99, 4).normal(100))
    assert not np.array_equal(a, RngStream(98, 3).normal(100))


def test_child_stream_matches_fresh_stream():
    assert np.array_equal(RngStream(5, 0).child(2).normal(4), RngStream(5, 2).normal(4))


def test_seed_range_checked():
    with pytest.raises(ValueError):
        RngStream(-1)
    RngStream(2**64 - 1)


@pytest.mark.parametrize("a,b,expected", [
    ((3, -1), (3, -1), 0.0),
    ((0, 0), (3, 4), 25.0),
    ((1, 2, 3), (2, 4, 6), 14.0),
])
def test_sq_euclidean_examples(a, b, expected):
    assert sq_euclidean(a, b) == expected


def test_sq_euclidean_dim_mismatch():
    with pytest.raises(DimensionMismatch):
        sq_euclidean([1, 2], [1, 2, 3])


def test_nonfinite_rejected():
    with pytest.raises(NonFiniteValue):
        as_vec([1.0, np.nan])
    with pytest.raises(NonFiniteValue):
        sq_euclidean([1e200], [-1e200])


@settings(max_examples=200)
@given(st.integers(1, 12).flatmap(lambda d: st.tuples(
    arrays(np.float64, d, elements=finite), arrays(np.float64, d, elements=finite))))
def test_sq_euclidean_symmetric_and_zero_on_diagonal(pair):
    a, b = pair
    assert sq_euclidean(a, b) == sq_euclidean(b, a)
    assert sq_euclidean(a, a) == 0.0
    assert sq_euclidean(a, b) >= 0.0


def test_shared_kernel_agrees_with_pairwise():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((5, 3)), rng.standard_normal((7, 3))
    d = pairwise_sq_dists(a, b)
    for i in range(5):
        np.testing.assert_allclose(d[i], sq_dists_to(b, a[i]), rtol=1e-12)


def test_finite_diff_examples():
    np.testing.assert_allclose(finite_diff_grad(lambda t: t[0] ** 2, [3.0]), [6.0], atol=1e-6)
    assert np.array_equal(finite_diff_grad(lambda t: 4.2, [1.0, -2.0, 3.0]), np.zeros(3))
    np.testing.assert_allclose(finite_diff_grad(lambda t: t[0] * t[1], [2.0, 5.0]), [5.0, 2.0], atol=1e-6)


@settings(max_examples=100)
@given(arrays(np.float64, 4, elements=st.floats(-3, 3)), st.floats(-2, 2), st.floats(-2, 2))
def test_finite_diff_exact_on_cubics(coef, x, y):
    # f(x, y) = c0 x^3 + c1 x^2 y + c2 y^2 + c3 x
    c0, c1, c2, c3 = coef
    f = lambda t: c0 * t[0] ** 3 + c1 * t[0] ** 2 * t[1] + c2 * t[1] ** 2 + c3 * t[0]
    exact = np.array([3 * c0 * x * x + 2 * c1 * x * y + c3, c1 * x * x + 2 * c2 * y])
    got = finite_diff_grad(f, [x, y])
    scale = max(1.0, np.abs(exact).max())
    assert np.abs(got - exact).max() <= 1e-6 * scale


def test_finite_diff_rejects_nonfinite():
    with pytest.raises(NonFiniteValue):
        finite_diff_grad(lambda t: math.inf, [0.0])
    with pytest.raises(ValueError):
        finite_diff_grad(lambda t: t[0], [0.0], h=0.0)
