"""Mixture density network: shapes, densities, analytic gradient, Adam."""

import numpy as np
import pytest
from scipy.special import logsumexp as sp_logsumexp
from scipy.stats import norm

from ucinfer.mdn import (Adam, MdnSpec, SCALE_FLOOR, forward, init,
                         mixture_log_prob, mixture_sample, nll, nll_and_grad,
                         unpack)

SPEC = MdnSpec(n_in=4, n_out=2, k=3, hidden=(8,))


class TestSpec:
    def test_layer_dims_and_param_count(self):
        assert SPEC.layer_dims() == [(4, 8), (8, 3), (8, 6), (8, 6)]
        assert SPEC.n_params == (4 * 8 + 8) + (8 * 3 + 3) + 2 * (8 * 6 + 6)

    def test_deep_trunk(self):
        spec = MdnSpec(n_in=2, n_out=1, k=2, hidden=(4, 4))
        assert spec.layer_dims() == [(2, 4), (4, 4), (4, 2), (4, 2), (4, 2)]

    def test_unpack_returns_views(self):
        w = init(SPEC, np.random.default_rng(0))
        W0, b0 = unpack(SPEC, w)[0]
        W0[0, 0] = 123.0
        b0[1] = -7.0
        assert w[0] == 123.0
        assert unpack(SPEC, w)[0][1][1] == -7.0


class TestForward:
    def test_shapes_and_normalization(self):
        w = init(SPEC, np.random.default_rng(1))
        X = np.random.default_rng(2).normal(size=(5, 4))
        logpi, mu, sigma, _ = forward(SPEC, w, X)
        assert logpi.shape == (5, 3)
        assert mu.shape == (5, 3, 2)
        assert sigma.shape == (5, 3, 2)
        assert np.exp(logpi).sum(axis=1) == pytest.approx(np.ones(5))
        assert np.all(sigma > SCALE_FLOOR)

    def test_logits_shift_invariance(self):
        # adding a constant to the logits bias leaves logpi unchanged
        w = init(SPEC, np.random.default_rng(3))
        X = np.random.default_rng(4).normal(size=(3, 4))
        logpi, _, _, _ = forward(SPEC, w, X)
        w2 = w.copy()
        unpack(SPEC, w2)[1][1][:] += 5.0
        logpi2, _, _, _ = forward(SPEC, w2, X)
        assert logpi2 == pytest.approx(logpi)


class TestMixtureDensity:
    def _random_mixture(self, rng, B=6, K=4, P=3):
        logits = rng.normal(size=(B, K))
        logpi = logits - sp_logsumexp(logits, axis=1, keepdims=True)
        mu = rng.normal(size=(B, K, P))
        sigma = 0.3 + rng.random((B, K, P))
        return logpi, mu, sigma

    def test_matches_scipy(self):
        rng = np.random.default_rng(5)
        logpi, mu, sigma = self._random_mixture(rng)
        theta = rng.normal(size=(6, 3))
        got = mixture_log_prob(logpi, mu, sigma, theta)
        comp = logpi + norm.logpdf(theta[:, None, :], mu, sigma).sum(axis=2)
        assert got == pytest.approx(sp_logsumexp(comp, axis=1))

    def test_single_component_is_gaussian(self):
        rng = np.random.default_rng(6)
        mu = rng.normal(size=(1, 1, 2))
        sigma = np.full((1, 1, 2), 0.7)
        logpi = np.zeros((1, 1))
        theta = rng.normal(size=(1, 2))
        got = mixture_log_prob(logpi, mu, sigma, theta)
        want = norm.logpdf(theta, mu[:, 0], sigma[:, 0]).sum(axis=1)
        assert got == pytest.approx(want)

    def test_density_integrates_to_one_1d(self):
        logpi = np.log(np.array([0.3, 0.7]))
        mu = np.array([[-1.0], [2.0]])
        sigma = np.array([[0.5], [1.5]])
        grid = np.linspace(-12.0, 14.0, 4001)
        dens = np.exp(mixture_log_prob(logpi, mu, sigma, grid[:, None]))
        assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-6)

    def test_sample_moments_and_weights(self):
        rng = np.random.default_rng(7)
        logpi = np.log(np.array([0.2, 0.8]))
        mu = np.array([[-3.0, 0.0], [4.0, 1.0]])
        sigma = np.array([[0.4, 0.3], [0.6, 0.5]])
        draws = mixture_sample(logpi, mu, sigma, 40_000, rng)
        want_mean = (np.exp(logpi)[:, None] * mu).sum(axis=0)
        assert draws.mean(axis=0) == pytest.approx(want_mean, abs=0.05)
        near_lo = (draws[:, 0] < 0.5).mean()
        assert near_lo == pytest.approx(0.2, abs=0.01)

    def test_sample_reproducible(self):
        logpi = np.log(np.array([0.5, 0.5]))
        mu = np.zeros((2, 1))
        sigma = np.ones((2, 1))
        a = mixture_sample(logpi, mu, sigma, 32, np.random.default_rng(8))
        b = mixture_sample(logpi, mu, sigma, 32, np.random.default_rng(8))
        assert a.tobytes() == b.tobytes()


class TestGradient:
    def test_analytic_matches_central_differences(self):
        spec = MdnSpec(n_in=3, n_out=2, k=2, hidden=(5,))
        rng = np.random.default_rng(9)
        w = init(spec, rng)
        X = rng.normal(size=(7, 3))
        Theta = rng.normal(size=(7, 2))
        loss, grad = nll_and_grad(spec, w, X, Theta)
        assert loss == pytest.approx(nll(spec, w, X, Theta))
        h = 1e-6
        for i in range(spec.n_params):
            wp, wm = w.copy(), w.copy()
            wp[i] += h
            wm[i] -= h
            fd = (nll(spec, wp, X, Theta) - nll(spec, wm, X, Theta)) / (2 * h)
            rel = abs(fd - grad[i]) / max(1e-6, abs(fd) + abs(grad[i]))
            assert rel < 1e-5, f"coordinate {i}: fd={fd} an={grad[i]}"

    def test_gradient_descends(self):
        spec = MdnSpec(n_in=2, n_out=1, k=2, hidden=(6,))
        rng = np.random.default_rng(10)
        w = init(spec, rng)
        X = rng.normal(size=(64, 2))
        Theta = (X @ np.array([[1.0], [-0.5]])
                 + 0.1 * rng.normal(size=(64, 1)))
        losses = []
        opt = Adam(spec.n_params, lr=5e-3)
        for _ in range(300):
            loss, grad = nll_and_grad(spec, w, X, Theta)
            losses.append(loss)
            opt.step(w, grad)
        assert losses[-1] < losses[0] - 0.5


class TestAdam:
    def test_minimizes_quadratic(self):
        target = np.array([3.0, -2.0, 0.5])
        w = np.zeros(3)
        opt = Adam(3, lr=0.05)
        for _ in range(2000):
            opt.step(w, 2.0 * (w - target))
        assert w == pytest.approx(target, abs=1e-3)

    def test_lr_is_live(self):
        w = np.zeros(1)
        opt = Adam(1, lr=1.0)
        opt.step(w, np.array([1.0]))
        first = abs(w[0])
        opt.lr = 0.0
        opt.step(w, np.array([1.0]))
        assert abs(w[0]) == first
