import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import simpson

from gradcheck import check_case, random_case
from imlekit.datasets import Dataset, MixtureSpec, ring_mixture_spec
from imlekit.models import (
    Gaussian1D, GaussianMixture, GeneratorNet, IsotropicGaussian, UnsupportedFamily,
    closed_form_mle, family_sample, location_loglik, log_density, net_backward, net_forward,
)
from imlekit.numerics import RngStream

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def test_log_density_examples():
    assert log_density(Gaussian1D(0, 1), [0.0]) == pytest.approx(-0.918939, abs=1e-6)
    assert log_density(Gaussian1D(0, 1), [1.0]) == pytest.approx(-1.418939, abs=1e-6)
    mix = GaussianMixture(MixtureSpec(np.array([[-1.0], [1.0]]), 1.0))
    assert log_density(mix, [0.0]) == pytest.approx(-1.418939, abs=1e-6)
    assert log_density(IsotropicGaussian.standard(3), np.zeros(3)) == pytest.approx(-3 * HALF_LOG_2PI)


@pytest.mark.parametrize("fam,sigma", [
    (Gaussian1D(0.3, 0.7), 0.7),
    (IsotropicGaussian((-1.0,), 2.0), 2.0),
    (GaussianMixture(MixtureSpec(np.array([[-1.0], [2.0]]), 0.5, np.array([0.3, 0.7]))), 0.5),
])
def test_density_integrates_to_one(fam, sigma):
    center = float(np.mean(fam.theta[:1]))
    x = np.linspace(center - 20 * sigma - 3, center + 20 * sigma + 3, 20001)
    p = np.exp(fam.log_density_batch(x[:, None]))
    assert simpson(p, x=x) == pytest.approx(1.0, abs=1e-3)


def test_family_sample_examples():
    draws = family_sample(Gaussian1D(5, 1), RngStream(1), 10**5)
    assert abs(draws.mean() - 5) < 0.02
    a = family_sample(Gaussian1D(5, 1), RngStream(2), 10)
    b = family_sample(Gaussian1D(5, 1), RngStream(2), 10)
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        family_sample(Gaussian1D(), RngStream(0), 0)


def test_ring_component_counts():
    spec = ring_mixture_spec(8, 2.0, 0.1)
    m = 8000
    x = family_sample(GaussianMixture(spec), RngStream(3), m)
    d = ((x[:, None, :] - spec.component_means[None]) ** 2).sum(-1)
    counts = np.bincount(d.argmin(1), minlength=8)
    assert np.all(np.abs(counts - m / 8) <= 4 * math.sqrt(m * (1 / 8) * (7 / 8)))


@pytest.mark.parametrize("points,expected", [((-1, 1), 0.0), ((0, 2, 4), 2.0), ((1,), 1.0)])
def test_closed_form_mle(points, expected):
    data = Dataset(np.array(points, float)[:, None])
    sol = closed_form_mle(Gaussian1D(0, 1.7), data)
    assert sol.theta[0] == pytest.approx(expected, abs=1e-15)


@settings(max_examples=40)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12), st.floats(0.2, 5))
def test_mle_is_a_strict_maximum(xs, std):
    data = Dataset(np.array(xs)[:, None])
    fam = Gaussian1D(0, std)
    sol = closed_form_mle(fam, data)
    best = location_loglik(fam, data, sol.theta)
    assert best == pytest.approx(sol.loglik)
    for delta in (1e-3, -1e-3):
        assert location_loglik(fam, data, sol.theta + delta) < best


def test_mle_isotropic_and_unsupported():
    data = Dataset(np.array([[0.0, 1.0], [2.0, 3.0]]))
    np.testing.assert_allclose(closed_form_mle(IsotropicGaussian.standard(2), data).theta, [1.0, 2.0])
    with pytest.raises(UnsupportedFamily):
        closed_form_mle(GaussianMixture(ring_mixture_spec(2, 1, 1)), Dataset(np.zeros((1, 2))))


def test_forward_examples():
    net = GeneratorNet([2, 2], "identity", np.array([1.0, 0, 0, 1, 0, 0]))
    np.testing.assert_array_equal(net_forward(net, [1.0, 2.0]), [1.0, 2.0])
    zero = GeneratorNet([3, 5, 4], "sigmoid")
    np.testing.assert_array_equal(net_forward(zero, [1.0, -2.0, 0.5]), np.full(4, 0.5))
    relu = GeneratorNet([1, 1, 1], "identity", np.array([1.0, 0.0, 1.0, 0.0]))
    np.testing.assert_array_equal(net_forward(relu, [-3.0]), [0.0])


def test_backward_examples():
    net = GeneratorNet.initialized([2, 4, 3], RngStream(0))
    assert np.array_equal(net_backward(net, [0.3, -0.2], np.zeros(3)), np.zeros(net.n_params))
    lin = GeneratorNet.initialized([3, 2], RngStream(1))
    z, u = np.array([0.5, -1.0, 2.0]), np.array([1.5, -0.5])
    g = net_backward(lin, z, u)
    np.testing.assert_allclose(g[:6].reshape(2, 3), np.outer(u, z))
    np.testing.assert_allclose(g[6:], u)


def test_relu_derivative_at_zero_is_zero():
    # hidden pre-activation exactly 0: no gradient flows to the first layer
    net = GeneratorNet([1, 1, 1], "identity", np.array([1.0, 0.0, 1.0, 0.0]))
    g = net_backward(net, [0.0], [1.0])
    assert g[0] == 0.0 and g[1] == 0.0


def test_random_2_8_3_matches_finite_differences():
    g = np.random.default_rng(11)
    net = GeneratorNet.initialized([2, 8, 3], RngStream(11))
    z = g.standard_normal((1, 2))
    while np.any(np.abs(net._forward_cache(z)[0][0]) < 1e-4):
        z = g.standard_normal((1, 2))
    assert check_case(net, z, g.standard_normal((1, 3))) <= 1e-5


@pytest.mark.parametrize("seed", range(10))
def test_backward_random_configurations(seed):
    assert check_case(*random_case(seed)) <= 1e-5


def test_forward_deterministic_and_batched():
    net = GeneratorNet.initialized([4, 6, 6, 3], RngStream(5), "sigmoid")
    z = RngStream(6).normal((5, 4))
    a, b = net.forward(z), net.forward(z.copy())
    assert np.array_equal(a, b)
    np.testing.assert_allclose(np.stack([net_forward(net, row) for row in z]), a, rtol=0, atol=1e-15)


def test_he_initialization_scale():
    net = GeneratorNet.initialized([400, 300, 2], RngStream(7))
    w = net.weights[0]
    assert w.std() == pytest.approx(math.sqrt(2 / 400), rel=0.02)
    assert np.all(net.biases[0] == 0)


def test_presets():
    net = GeneratorNet.from_preset("desk", 2, RngStream(0))
    assert net.layer_sizes == (16, 64, 64, 2)
    assert GeneratorNet.from_preset("mnist", 784, RngStream(0), "sigmoid").layer_sizes == (100, 1200, 1200, 784)


def test_shape_errors():
    net = GeneratorNet([2, 3])
    with pytest.raises(ValueError):
        net_forward(net, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        GeneratorNet([2, 3], params=np.zeros(4))
    with pytest.raises(ValueError):
        GeneratorNet([2, 3], "tanh")
