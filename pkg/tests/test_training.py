import numpy as np
import pytest

from imlekit.datasets import Dataset, gen_ring_mixture
from imlekit.models import Gaussian1D, GeneratorNet
from imlekit.numerics import RngStream, finite_diff_grad, sq_dists_to
from imlekit.training import (
    ImleConfig, Matching, TrainTrace, TrainingDiverged, draw_model_samples, imle_objective_mc,
    imle_train, inner_sgd, match_batch, minibatch_loss_and_grad,
)
from gradcheck import relative_error


def small_ring(n=64, seed=0):
    return gen_ring_mixture(RngStream(seed, 1), 8, 2.0, 0.1, n)


def test_config_defaults_resolve():
    cfg = ImleConfig().resolved(512)
    assert (cfg.batch_size, cfg.m, cfg.minibatch_size, cfg.K, cfg.L) == (256, 1024, 64, 300, 50)
    assert cfg.optimizer == "sgd" and cfg.eta == 1e-4
    small = ImleConfig().resolved(10)
    assert (small.batch_size, small.minibatch_size, small.m) == (10, 10, 40)


def test_config_validation():
    with pytest.raises(ValueError):
        ImleConfig(eta=0).resolved(10)
    with pytest.raises(ValueError):
        ImleConfig(batch_size=20).resolved(10)
    with pytest.raises(ValueError):
        ImleConfig(optimizer="rmsprop").resolved(10)
    with pytest.warns(UserWarning, match="smaller than batch_size"):
        ImleConfig(m=2).resolved(10)


def test_draw_model_samples():
    net = GeneratorNet.initialized([3, 5, 2], RngStream(0))
    a = draw_model_samples(net, RngStream(1), 3)
    b = draw_model_samples(net, RngStream(1), 3)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    _, flat = draw_model_samples(GeneratorNet([4, 6, 3], "sigmoid"), RngStream(2), 7)
    assert np.array_equal(flat, np.full((7, 3), 0.5))


def test_identity_net_sample_covariance():
    ident = GeneratorNet([2, 2], "identity", np.array([1.0, 0, 0, 1, 0, 0]))
    _, x = draw_model_samples(ident, RngStream(3), 10**5)
    assert np.abs(np.cov(x.T) - np.eye(2)).max() < 0.05


def test_match_batch_examples():
    g = np.random.default_rng(0)
    data = Dataset(g.standard_normal((64, 8)))
    z = g.standard_normal((64, 3))
    m = match_batch(data, np.arange(64), data.points.copy(), z)
    assert np.all(m.sq_dists == 0) and np.array_equal(m.sample_indices, np.arange(64))
    one = match_batch(data, [3, 5, 7], g.standard_normal((1, 8)), g.standard_normal((1, 3)))
    assert np.all(one.sample_indices == 0)
    samples, lat = g.standard_normal((256, 8)), g.standard_normal((256, 3))
    for structure in ("brute", "vp-tree"):
        m = match_batch(data, np.arange(64), samples, lat, structure)
        for i, j, d in zip(m.data_indices, m.sample_indices, m.sq_dists):
            dd = sq_dists_to(samples, data.points[i])
            assert j == int(np.argmin(dd)) and d == dd[j]
        assert np.array_equal(m.latents, lat[m.sample_indices])
    with pytest.raises(IndexError):
        match_batch(data, [64], samples, lat)


def test_inner_sgd_noop_when_L_is_zero():
    net = GeneratorNet.initialized([2, 4, 2], RngStream(0))
    data = small_ring(16)
    _, samples = draw_model_samples(net, RngStream(1), 32)
    m = match_batch(data, np.arange(16), samples, RngStream(1).normal((32, 2)))
    before = net.params.copy()
    _, losses = inner_sgd(net, data, m, ImleConfig(L=0).resolved(16), RngStream(2))
    assert losses == [] and np.array_equal(net.params, before)


def _one_pair_setup():
    net = GeneratorNet([1, 1], "identity", np.array([0.0, 0.0]))  # x = theta * z + b
    data = Dataset(np.array([[1.0]]))
    m = Matching(np.array([0]), np.array([0]), np.array([[0.0]]), np.array([[0.0]]), np.array([1.0]))
    return net, data, m


def test_inner_sgd_hand_iteration():
    net, data, m = _one_pair_setup()
    cfg = ImleConfig(L=1, eta=0.1, batch_size=1, minibatch_size=1, m=1).resolved(1)
    inner_sgd(net, data, m, cfg, RngStream(0))
    assert net.params[1] == pytest.approx(0.2, abs=1e-15)
    # further steps follow b <- b + 2 eta (1 - b)
    cfg.L = 4
    inner_sgd(net, data, m, cfg, RngStream(0))
    b = 0.2
    for _ in range(4):
        b = b + 0.2 * (1 - b)
    assert net.params[1] == pytest.approx(b, abs=1e-14)


def test_minibatch_gradient_matches_finite_differences():
    g = np.random.default_rng(4)
    for trial in range(20):
        net = GeneratorNet.initialized([3, 7, 2], RngStream(trial), "sigmoid" if trial % 2 else "identity")
        z = g.standard_normal((5, 3))
        if np.any(np.abs(net._forward_cache(z)[0][0]) < 1e-4):
            continue
        x = g.standard_normal((5, 2))
        loss, grad = minibatch_loss_and_grad(net, x, z, n=40)
        f = lambda th: minibatch_loss_and_grad(net.with_params(th), x, z, n=40)[0]
        assert f(net.params) == loss
        assert relative_error(grad, finite_diff_grad(f, net.params.copy())) <= 1e-5


def test_linear_net_inner_loss_non_increasing():
    # full-batch steps on a quadratic; eta below 1/lambda_max of the Hessian
    g = np.random.default_rng(5)
    n = 8
    data = Dataset(g.standard_normal((n, 1)))
    z = g.standard_normal((n, 1))
    m = Matching(np.arange(n), np.arange(n), z, np.zeros((n, 1)), np.ones(n))
    feats = np.hstack([z, np.ones((n, 1))])
    lam = np.linalg.eigvalsh(2 * feats.T @ feats).max()   # n/|B| = 1 at full batch
    cfg = ImleConfig(L=40, eta=1.0 / lam, batch_size=n, minibatch_size=n, m=n).resolved(n)
    net = GeneratorNet([1, 1], "identity", np.array([3.0, -2.0]))
    _, losses = inner_sgd(net, data, m, cfg, RngStream(0))
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_stale_matching_uses_frozen_residual():
    net, data, m = _one_pair_setup()
    m = Matching(m.data_indices, m.sample_indices, m.latents, np.array([0.5]).reshape(1, 1), m.sq_dists)
    cfg = ImleConfig(L=3, eta=0.1, batch_size=1, minibatch_size=1, m=1, stale_matching=True).resolved(1)
    inner_sgd(net, data, m, cfg, RngStream(0))
    # residual stays 0.5 - 1 each step, so b moves by 2 * 0.1 * 0.5 three times
    assert net.params[1] == pytest.approx(0.3, abs=1e-15)


def test_divergence_raises_with_diagnostic():
    data = small_ring(64)
    net = GeneratorNet.initialized([4, 16, 2], RngStream(0))
    cfg = ImleConfig(K=5, L=50, eta=5.0)
    with pytest.raises(TrainingDiverged) as err:
        with np.errstate(all="ignore"):
            imle_train(net, data, cfg, RngStream(1))
    assert isinstance(err.value.trace, TrainTrace)
    assert "inner_step" in err.value.diagnostic


def test_train_zero_iterations_is_noop():
    net = GeneratorNet.initialized([4, 8, 2], RngStream(0))
    out, trace = imle_train(net, small_ring(), ImleConfig(K=0), RngStream(1))
    assert np.array_equal(out.params, net.params) and len(trace) == 0
    assert trace.to_csv() == TrainTrace.CSV_HEADER + "\n"


def test_train_is_deterministic_and_leaves_input_untouched():
    data = small_ring(128)
    net = GeneratorNet.initialized([4, 16, 2], RngStream(0))
    before = net.params.copy()
    cfg = ImleConfig(K=15, L=10, eta=2e-4)
    a, ta = imle_train(net, data, cfg, RngStream(3), record_wall_time=False)
    b, tb = imle_train(net, data, cfg, RngStream(3), record_wall_time=False)
    assert np.array_equal(before, net.params)
    assert np.array_equal(a.params, b.params)
    assert ta.to_csv() == tb.to_csv()
    assert ta.records[-1].mean_sqdist_pre < ta.records[0].mean_sqdist_pre
    vp, _ = imle_train(net, data, ImleConfig(K=15, L=10, eta=2e-4, index_structure="vp-tree"), RngStream(3))
    assert np.array_equal(vp.params, a.params)


def test_adam_runs():
    data = small_ring(128)
    net = GeneratorNet.initialized([4, 16, 2], RngStream(0))
    out, trace = imle_train(net, data, ImleConfig(K=20, L=10, eta=1e-3, optimizer="adam"), RngStream(3))
    assert trace.records[-1].mean_sqdist_pre < trace.records[0].mean_sqdist_pre


def test_objective_mc_examples():
    data0 = Dataset(np.array([[0.0]]))
    mean, se = imle_objective_mc(Gaussian1D(0, 1), data0, 1, 20000, RngStream(1))
    assert abs(mean - 1.0) <= 3 * se
    mean, se = imle_objective_mc(Gaussian1D(1.5, 1), data0, 1, 20000, RngStream(2))
    assert abs(mean - (1 + 1.5 ** 2)) <= 3 * se
    const = GeneratorNet([1, 1], "identity", np.array([0.0, 0.7]))
    mean, _ = imle_objective_mc(const, Dataset(np.array([[0.7]])), 3, 10, RngStream(3))
    assert mean == 0.0


def test_objective_mc_monotone_in_m_under_common_numbers():
    data = Dataset(np.array([[-1.0], [0.5], [2.0]]))
    fam = Gaussian1D(0.3, 1.2)
    # one trial per seed: the m=16 draw starts with the m=1 draw, so the sets are nested
    for seed in range(30):
        small, _ = imle_objective_mc(fam, data, 1, 1, RngStream(seed))
        big, _ = imle_objective_mc(fam, data, 16, 1, RngStream(seed))
        assert big <= small
