"""Tests for the variational updates, the bound, and the fit loop.

The conjugate updates are checked against independent oracles: closed-form
scalar Bayes posteriors, least-squares limits, numerical integration of
the exact Gamma conditionals, a Monte-Carlo estimate of the expected
residual, and a quadrature evaluation of the true log marginal likelihood
that the bound must stay below.
"""

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import random_collection, random_posterior
from gfa.data import DataCollection, ViewPartition
from gfa.inference import (
    FitConfig,
    Hyperparameters,
    elbo,
    expected_residual,
    fit,
    init_posterior,
    update_alpha,
    update_tau,
    update_w,
    update_z,
)


class TestInit:
    def test_shapes_and_determinism(self):
        rng = np.random.default_rng(0)
        c = random_collection(rng, [5, 3], 20)
        config = FitConfig(K=4, seed=7)
        a = init_posterior(c, config)
        b = init_posterior(c, config)
        assert a.Z_mean.shape == (20, 4)
        assert np.array_equal(a.Z_mean, b.Z_mean)
        assert np.array_equal(a.Z_cov, np.eye(4))
        assert all(np.array_equal(w, np.zeros((d, 4))) for w, d in zip(a.W_mean, (5, 3)))

    def test_neutral_gamma_moments(self):
        rng = np.random.default_rng(1)
        c = random_collection(rng, [4, 2], 15)
        post = init_posterior(c, FitConfig(K=3))
        assert np.allclose(post.exp_tau(), 1.0)
        assert np.allclose(post.exp_alpha(0), 1.0)
        assert np.allclose(post.exp_alpha(1), 1.0)

    def test_k_zero_rejected(self):
        with pytest.raises(ValueError):
            FitConfig(K=0)

    def test_oversized_k_warns(self):
        rng = np.random.default_rng(2)
        c = random_collection(rng, [2], 5)
        with pytest.warns(UserWarning, match="cannot be identified"):
            init_posterior(c, FitConfig(K=9))


class TestUpdateZ:
    def test_zero_w_recovers_prior(self):
        rng = np.random.default_rng(3)
        c = random_collection(rng, [3, 2], 10)
        post = random_posterior(rng, [3, 2], 10, 2)
        for m in range(2):
            post.W_mean[m] = np.zeros((post.dims[m], 2))
            post.W_cov[m] = np.zeros((2, 2))
        update_z(post, c)
        assert np.allclose(post.Z_cov, np.eye(2))
        assert np.allclose(post.Z_mean, 0.0)

    def test_scalar_bayes_oracle(self):
        # Single view, D=1, K=1: the update must equal the 1-D Gaussian
        # posterior with precision 1 + tau*<w^2> and mean tau*x*w*cov.
        rng = np.random.default_rng(4)
        c = random_collection(rng, [1], 6)
        post = random_posterior(rng, [1], 6, 1)
        tau = float(post.exp_tau()[0])
        w = float(post.W_mean[0][0, 0])
        ww = w**2 + float(post.W_cov[0][0, 0])
        update_z(post, c)
        var = 1.0 / (1.0 + tau * ww)
        assert np.allclose(post.Z_cov, [[var]])
        assert np.allclose(post.Z_mean, tau * c.data * w * var)

    def test_never_decreases_elbo(self):
        rng = np.random.default_rng(5)
        for trial in range(20):
            dims = rng.integers(1, 4, size=rng.integers(1, 4)).tolist()
            c = random_collection(rng, dims, 8)
            post = random_posterior(rng, dims, 8, 2)
            before = elbo(post, c)
            update_z(post, c)
            assert elbo(post, c) >= before - 1e-8 * abs(before)


class TestUpdateW:
    def test_least_squares_limit(self):
        # Orthonormal Z columns, zero Z covariance, tau = 1, vanishing
        # alpha: the update must return the least-squares projection.
        rng = np.random.default_rng(6)
        n, d, k = 12, 4, 3
        q, _ = np.linalg.qr(rng.standard_normal((n, k)))
        c = DataCollection(ViewPartition.of([d]), rng.standard_normal((n, d)))
        post = random_posterior(rng, [d], n, k, prior_mode="none")
        post.Z_mean = q
        post.Z_cov = np.zeros((k, k))
        post.tau_shape = np.ones(1)
        post.tau_rate = np.ones(1)
        update_w(post, c, 0)
        assert np.allclose(post.W_mean[0], c.data.T @ q, atol=1e-8)

    def test_ard_pruning_limit(self):
        rng = np.random.default_rng(7)
        c = random_collection(rng, [4], 10)
        post = random_posterior(rng, [4], 10, 3)
        post.alpha_shape[0] = np.array([1.0, 1e12, 1.0])
        post.alpha_rate[0] = np.ones(3)
        update_w(post, c, 0)
        assert np.max(np.abs(post.W_mean[0][:, 1])) < 1e-8
        assert np.max(np.abs(post.W_mean[0][:, [0, 2]])) > 1e-3

    def test_never_decreases_elbo(self):
        rng = np.random.default_rng(8)
        for trial in range(20):
            dims = rng.integers(1, 4, size=rng.integers(1, 4)).tolist()
            c = random_collection(rng, dims, 8)
            post = random_posterior(rng, dims, 8, 2)
            m = int(rng.integers(len(dims)))
            before = elbo(post, c)
            update_w(post, c, m)
            assert elbo(post, c) >= before - 1e-8 * abs(before)


class TestUpdateAlpha:
    def test_documented_example(self):
        # D=5, <||w||^2> = 10 with vague hyperparameters: shape 2.5, rate 5,
        # posterior mean 0.5.
        rng = np.random.default_rng(9)
        post = random_posterior(rng, [5], 10, 1)
        post.W_mean[0] = np.full((5, 1), np.sqrt(1.6))  # ||w||^2 = 8
        post.W_cov[0] = np.array([[0.4]])  # + 5*0.4 = 10 total
        update_alpha(post)
        assert np.allclose(post.alpha_shape[0], 2.5 + 1e-14)
        assert np.allclose(post.alpha_rate[0], 5.0 + 1e-14)
        assert np.allclose(post.exp_alpha(0), 0.5)

    def test_quadrature_oracle(self):
        # The exact conditional p(alpha | w) is Gamma; its mean computed by
        # numerical integration must match shape/rate of the update.
        rng = np.random.default_rng(10)
        hyper = Hyperparameters(a0=0.7, b0=1.3)
        post = random_posterior(rng, [5], 10, 1)
        post.hyper = hyper
        sq = float(post.w_sqnorm(0)[0])
        update_alpha(post)
        a, b = float(post.alpha_shape[0, 0]), float(post.alpha_rate[0, 0])

        def density(x):
            return x ** (hyper.a0 + 5 / 2.0 - 1.0) * np.exp(-(hyper.b0 + sq / 2.0) * x)

        norm, _ = integrate.quad(density, 0, np.inf)
        mean, _ = integrate.quad(lambda x: x * density(x), 0, np.inf)
        assert abs(mean / norm - a / b) < 1e-8 * (a / b)

    def test_shared_mode_pools_views(self):
        rng = np.random.default_rng(11)
        post = random_posterior(rng, [3, 4], 10, 2, prior_mode="shared_ard")
        sq = sum(post.w_sqnorm(m) for m in range(2))
        update_alpha(post)
        assert post.alpha_shape.shape == (2,)
        assert np.allclose(post.alpha_shape, 1e-14 + 7 / 2.0)
        assert np.allclose(post.alpha_rate, 1e-14 + sq / 2.0)

    def test_never_decreases_elbo(self):
        rng = np.random.default_rng(12)
        for trial in range(20):
            dims = rng.integers(1, 4, size=rng.integers(1, 4)).tolist()
            mode = ["group_ard", "shared_ard"][trial % 2]
            c = random_collection(rng, dims, 8)
            post = random_posterior(rng, dims, 8, 2, prior_mode=mode)
            before = elbo(post, c)
            update_alpha(post)
            assert elbo(post, c) >= before - 1e-8 * abs(before)


class TestUpdateTau:
    def test_null_model_rate(self):
        rng = np.random.default_rng(13)
        c = random_collection(rng, [3, 2], 10)
        post = random_posterior(rng, [3, 2], 10, 2)
        for m in range(2):
            post.W_mean[m][:] = 0.0
            post.W_cov[m][:] = 0.0
        post.Z_mean[:] = 0.0
        post.Z_cov[:] = 0.0
        update_tau(post, c)
        for m in range(2):
            assert np.isclose(
                post.tau_rate[m], 1e-14 + 0.5 * (c.view(m) ** 2).sum()
            )
            assert np.isclose(post.tau_shape[m], 1e-14 + 10 * post.dims[m] / 2.0)

    def test_monte_carlo_residual_oracle(self):
        # <||X - Z W^T||^2> must match sampling Z, W from q within 3 SE.
        rng = np.random.default_rng(14)
        n, d, k, draws = 6, 3, 2, 100_000
        c = random_collection(rng, [d], n)
        post = random_posterior(rng, [d], n, k)
        exact = expected_residual(post, c, 0)
        lz = np.linalg.cholesky(post.Z_cov)
        lw = np.linalg.cholesky(post.W_cov[0])
        z = post.Z_mean + rng.standard_normal((draws, n, k)) @ lz.T
        w = post.W_mean[0] + rng.standard_normal((draws, d, k)) @ lw.T
        resid = c.data - np.einsum("snk,sdk->snd", z, w)
        values = (resid**2).sum(axis=(1, 2))
        se = values.std(ddof=1) / np.sqrt(draws)
        assert abs(values.mean() - exact) < 3 * se

    def test_never_decreases_elbo(self):
        rng = np.random.default_rng(15)
        for trial in range(20):
            dims = rng.integers(1, 4, size=rng.integers(1, 4)).tolist()
            c = random_collection(rng, dims, 8)
            post = random_posterior(rng, dims, 8, 2)
            before = elbo(post, c)
            update_tau(post, c)
            assert elbo(post, c) >= before - 1e-8 * abs(before)


class TestElbo:
    def test_below_log_marginal_quadrature_oracle(self):
        # K=1, M=1, D=1: the marginal likelihood is a 2-D integral over
        # (w, tau) once z is integrated analytically and alpha collapses
        # the w prior to a Student-t. Every ELBO value along a fit must
        # stay strictly below it.
        rng = np.random.default_rng(16)
        n = 6
        y = (rng.standard_normal(n) * 1.3).reshape(n, 1)
        y -= y.mean()
        c = DataCollection(ViewPartition.of([1]), y)
        hyper = Hyperparameters(a0=1.0, b0=1.0, a_tau0=1.0, b_tau0=1.0)

        def integrand(tau, w):
            var = w**2 + 1.0 / tau
            like = np.prod(stats.norm.pdf(y.ravel(), scale=np.sqrt(var)))
            return like * stats.t.pdf(w, df=2.0) * stats.gamma.pdf(tau, 1.0)

        marginal, err = integrate.dblquad(
            integrand, -12, 12, 1e-6, 60, epsabs=1e-14
        )
        assert err < 1e-3 * marginal
        log_marginal = np.log(marginal)
        result = fit(c, FitConfig(K=1, max_iter=40, seed=0, hyper=hyper))
        assert np.all(result.elbo_trace < log_marginal)
        # The converged bound should also be reasonably tight.
        assert result.elbo_trace[-1] > log_marginal - 3.0

    def test_finite_on_random_states(self):
        rng = np.random.default_rng(17)
        for trial in range(10):
            dims = rng.integers(1, 4, size=rng.integers(1, 4)).tolist()
            mode = ["group_ard", "shared_ard", "none"][trial % 3]
            c = random_collection(rng, dims, 8)
            post = random_posterior(rng, dims, 8, 2, prior_mode=mode)
            assert np.isfinite(elbo(post, c))


class TestFit:
    def test_deterministic(self):
        rng = np.random.default_rng(18)
        c = random_collection(rng, [4, 3], 25)
        config = FitConfig(K=3, max_iter=30, seed=5, ard_start=10)
        a = fit(c, config)
        b = fit(c, config)
        assert np.array_equal(a.elbo_trace, b.elbo_trace)
        assert np.array_equal(a.posterior.Z_mean, b.posterior.Z_mean)
        assert all(
            np.array_equal(x, y) for x, y in zip(a.posterior.W_mean, b.posterior.W_mean)
        )

    def test_monotone_trace_small_instance(self):
        rng = np.random.default_rng(19)
        c = random_collection(rng, [3, 5, 2], 30)
        result = fit(c, FitConfig(K=4, max_iter=80, seed=1, ard_start=15))
        diffs = np.diff(result.elbo_trace)
        floor = -1e-8 * np.abs(result.elbo_trace[:-1])
        assert np.all(diffs >= floor)

    def test_convergence_flag(self):
        rng = np.random.default_rng(20)
        c = random_collection(rng, [3, 3], 20)
        result = fit(c, FitConfig(K=2, max_iter=500, elbo_rel_tol=1e-7, seed=2,
                                  ard_start=10))
        assert result.converged
        assert result.n_iter < 500

    def test_uncentered_data_warns(self):
        rng = np.random.default_rng(21)
        y = rng.standard_normal((15, 4)) + 3.0
        c = DataCollection(ViewPartition.of([4]), y)
        with pytest.warns(UserWarning, match="centered"):
            fit(c, FitConfig(K=2, max_iter=2, ard_start=0))

    def test_noise_scale_equivariance(self):
        # Scaling one view by c > 0 scales its fitted noise variance by
        # c^2 within 5% on converged fits.
        rng = np.random.default_rng(22)
        base = random_collection(rng, [4, 4], 120)
        scaled_data = base.data.copy()
        scaled_data[:, 4:] *= 3.0
        scaled = DataCollection(base.partition, scaled_data)
        config = FitConfig(K=3, max_iter=300, seed=3, ard_start=20)
        var = []
        for c in (base, scaled):
            post = fit(c, config).posterior
            var.append(post.tau_rate / (post.tau_shape - 1.0))
        assert abs(var[1][1] / var[0][1] - 9.0) < 0.45
        assert abs(var[1][0] / var[0][0] - 1.0) < 0.05
