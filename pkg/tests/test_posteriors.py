import math

import numpy as np
import pytest
from scipy.special import betaincinv

from cascade_bandits.posteriors import (
    BetaItemPosterior,
    EllipsoidState,
    GaussianItemPosterior,
    RadiusParams,
    beta_observe,
    beta_quantile,
    delta_schedule,
    ellipsoid_rank_one_update,
    gaussian_observe,
    gaussian_posterior_params,
    gaussian_sample,
    gaussian_sample_all,
    mvn_sample,
    radius_beta_t,
)


def quadrature_bayes_update(mu0, var0, noise_var, values, lo=-10.0, hi=10.0, n=40001):
    """Independent oracle: posterior mean/variance by grid integration."""
    grid = np.linspace(lo, hi, n)
    log_post = -((grid - mu0) ** 2) / (2 * var0)
    for v in values:
        log_post = log_post - ((v - grid) ** 2) / (2 * noise_var)
    dens = np.exp(log_post - log_post.max())
    dens /= np.trapezoid(dens, grid)
    mean = np.trapezoid(dens * grid, grid)
    var = np.trapezoid(dens * (grid - mean) ** 2, grid)
    return mean, var


class TestGaussianPosterior:
    def test_single_observation_halves_variance(self):
        state = GaussianItemPosterior(3, prior_mean=0.0, prior_var=1.0, noise_var=1.0)
        gaussian_observe(state, 0, 1.0)
        mean, var = gaussian_posterior_params(state, 0)
        assert mean == pytest.approx(0.5)
        assert var == pytest.approx(0.5)

    def test_no_observation_keeps_prior(self):
        state = GaussianItemPosterior(2, prior_mean=0.0, prior_var=1.0, noise_var=1.0)
        mean, var = gaussian_posterior_params(state, 1)
        assert (mean, var) == (0.0, 1.0)

    def test_matches_quadrature_oracle(self):
        state = GaussianItemPosterior(1, prior_mean=0.2, prior_var=0.25, noise_var=1.0)
        values = [0.9, 0.4, 0.7, 0.5, 0.5]  # sums to 3.0
        for v in values:
            gaussian_observe(state, 0, v)
        mean, var = gaussian_posterior_params(state, 0)
        o_mean, o_var = quadrature_bayes_update(0.2, 0.25, 1.0, values)
        assert abs(mean - o_mean) < 1e-6
        assert abs(var - o_var) < 1e-6

    def test_quadrature_oracle_on_random_cases(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            mu0 = rng.normal(0, 1)
            var0 = rng.uniform(0.2, 2.0)
            noise = rng.uniform(0.3, 2.0)
            values = rng.normal(0, 1, rng.integers(0, 6)).tolist()
            state = GaussianItemPosterior(1, mu0, var0, noise)
            for v in values:
                gaussian_observe(state, 0, v)
            mean, var = gaussian_posterior_params(state, 0)
            o_mean, o_var = quadrature_bayes_update(mu0, var0, noise, values)
            assert abs(mean - o_mean) < 1e-6
            assert abs(var - o_var) < 1e-6

    def test_variance_strictly_decreases(self):
        state = GaussianItemPosterior(1, 0.0, 1.0, 1.0)
        last = 1.0
        for _ in range(10):
            gaussian_observe(state, 0, 0.3)
            _, var = gaussian_posterior_params(state, 0)
            assert var < last
            last = var

    def test_mean_is_convex_combination(self):
        state = GaussianItemPosterior(1, prior_mean=0.5, prior_var=2.0, noise_var=1.0)
        vals = [0.1, 0.9, 0.7]
        for v in vals:
            gaussian_observe(state, 0, v)
        mean, var = gaussian_posterior_params(state, 0)
        w_prior = var / 2.0
        w_data = len(vals) * var / 1.0
        assert w_prior + w_data == pytest.approx(1.0)
        assert mean == pytest.approx(w_prior * 0.5 + w_data * np.mean(vals))


class TestGaussianSampling:
    def test_variance_collapse(self):
        state = GaussianItemPosterior(1, 0.0, 1.0, 1.0)
        state.obs_count[0] = 10**9
        state.obs_sum[0] = 0.4 * 10**9
        mean, _ = gaussian_posterior_params(state, 0)
        s = gaussian_sample(state, 0, np.random.default_rng(0))
        assert abs(s - mean) < 1e-3

    def test_clt_mean(self):
        state = GaussianItemPosterior(1, 0.0, 1.0, 1.0)
        for v in (1.0, 0.0, 1.0):
            gaussian_observe(state, 0, v)
        mean, var = gaussian_posterior_params(state, 0)
        rng = np.random.default_rng(77)
        n = 100_000
        draws = np.array([gaussian_sample(state, 0, rng) for _ in range(n)])
        assert abs(draws.mean() - mean) < 4 * math.sqrt(var) / math.sqrt(n)

    def test_seed_determinism(self):
        state = GaussianItemPosterior(4, 0.0, 1.0, 1.0)
        a = gaussian_sample_all(state, np.random.default_rng(5))
        b = gaussian_sample_all(state, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)


class TestBetaPosterior:
    def test_click_and_skip_counting(self):
        state = BetaItemPosterior(np.array([1.0]), np.array([10.0]))
        beta_observe(state, 0, clicked=True)
        assert (state.alphas[0], state.betas[0]) == (2.0, 10.0)
        state = BetaItemPosterior(np.array([1.0]), np.array([10.0]))
        beta_observe(state, 0, clicked=False)
        assert (state.alphas[0], state.betas[0]) == (1.0, 11.0)

    def test_bulk_counting(self):
        state = BetaItemPosterior(np.array([1.0]), np.array([1.0]))
        for _ in range(100):
            beta_observe(state, 0, True)
        for _ in range(50):
            beta_observe(state, 0, False)
        assert (state.alphas[0], state.betas[0]) == (101.0, 51.0)
        assert state.alphas[0] / (state.alphas[0] + state.betas[0]) == pytest.approx(101 / 152)

    def test_rejects_nonpositive_parameters(self):
        with pytest.raises(ValueError):
            BetaItemPosterior(np.array([0.0]), np.array([1.0]))


class TestBetaQuantile:
    def test_uniform_median(self):
        state = BetaItemPosterior(np.array([1.0]), np.array([1.0]))
        assert beta_quantile(state, 0, 0.5) == pytest.approx(0.5, abs=1e-10)

    def test_symmetric_median(self):
        state = BetaItemPosterior(np.array([2.0]), np.array([2.0]))
        assert beta_quantile(state, 0, 0.5) == pytest.approx(0.5, abs=1e-10)

    def test_against_inverse_incomplete_beta(self):
        # DERIVED oracle: scipy's betaincinv, an independent inversion route
        state = BetaItemPosterior(np.array([2.0]), np.array([5.0]))
        assert abs(beta_quantile(state, 0, 0.9) - betaincinv(2, 5, 0.9)) < 1e-8

    def test_monotone_in_q(self):
        state = BetaItemPosterior(np.array([3.0]), np.array([4.0]))
        qs = np.linspace(0.05, 0.95, 10)
        vals = [beta_quantile(state, 0, q) for q in qs]
        assert all(a <= b for a, b in zip(vals, vals[1:]))

    def test_rejects_bad_level(self):
        state = BetaItemPosterior(np.array([1.0]), np.array([1.0]))
        for q in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(ValueError):
                beta_quantile(state, 0, q)


class TestRadius:
    def test_formula_at_t_zero(self):
        params = RadiusParams(sigma_sq=1.0, lam=1.0, S=1.0, d=3, delta=0.1)
        expected = math.sqrt(2 * math.log(10)) + 1.0  # 3.145966...
        assert radius_beta_t(params, 0) == pytest.approx(expected, abs=1e-12)
        assert radius_beta_t(params, 0) == pytest.approx(3.14597, abs=1e-5)

    def test_delta_to_one_leaves_norm_term(self):
        params = RadiusParams(1.0, 1.0, 2.5, 4, 0.5)
        assert radius_beta_t(params, 0, delta=1 - 1e-12) == pytest.approx(2.5, abs=1e-5)

    def test_monotone_in_t(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            params = RadiusParams(
                sigma_sq=rng.uniform(0.1, 2.0),
                lam=rng.uniform(1e-4, 2.0),
                S=rng.uniform(0.5, 3.0),
                d=int(rng.integers(1, 10)),
                delta=rng.uniform(0.01, 0.5),
            )
            t = int(rng.integers(0, 1000))
            assert radius_beta_t(params, t) <= radius_beta_t(params, t + 1)

    def test_decreasing_in_delta(self):
        params = RadiusParams(1.0, 1.0, 1.0, 3, 0.5)
        assert radius_beta_t(params, 5, delta=0.01) > radius_beta_t(params, 5, delta=0.2)

    def test_sigma_prefactor_convention(self):
        sq = RadiusParams(0.25, 1.0, 1.0, 3, 0.1, prefactor="sigma_sq")
        lin = RadiusParams(0.25, 1.0, 1.0, 3, 0.1, prefactor="sigma")
        log_part = radius_beta_t(RadiusParams(1.0, 1.0, 1.0, 3, 0.1), 7) - 1.0
        assert radius_beta_t(sq, 7) == pytest.approx(0.25 * log_part + 1.0)
        assert radius_beta_t(lin, 7) == pytest.approx(0.5 * log_part + 1.0)


class TestDeltaSchedule:
    def test_first_round_halves(self):
        assert delta_schedule(0.3, 1) == pytest.approx(0.15)

    def test_power_of_two(self):
        assert delta_schedule(0.8, 8) == pytest.approx(0.1)

    def test_sum_respects_doubling_bound(self):
        delta = 0.5
        for T in (10, 100, 1000):
            total = sum(delta_schedule(delta, t) for t in range(1, T + 1))
            assert total / delta <= math.log2(T) / 2 + 1

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            delta_schedule(0.5, 0)
        with pytest.raises(ValueError):
            delta_schedule(1.5, 3)


class TestEllipsoid:
    def test_identity_rank_one(self):
        state = EllipsoidState(3, 1.0)
        ellipsoid_rank_one_update(state, np.array([1.0, 0.0, 0.0]), 1.0, 0.0)
        np.testing.assert_allclose(state.V, np.diag([2.0, 1.0, 1.0]))
        np.testing.assert_allclose(state.gram_inv, np.diag([0.5, 1.0, 1.0]))

    def test_incremental_inverse_vs_direct(self):
        # DERIVED oracle: full matrix inversion after 50 random updates
        rng = np.random.default_rng(31)
        state = EllipsoidState(8, 0.5)
        for _ in range(50):
            x = rng.normal(size=8)
            x /= max(1.0, np.linalg.norm(x))
            ellipsoid_rank_one_update(state, x, rng.uniform(0.0, 1.0), rng.normal())
            err = np.linalg.norm(state.gram_inv - np.linalg.inv(state.V))
            assert err < 1e-8

    def test_zero_weight_is_noop_on_gram(self):
        state = EllipsoidState(4, 1.0)
        V0, inv0 = state.V.copy(), state.gram_inv.copy()
        ellipsoid_rank_one_update(state, np.ones(4) / 2, 0.0, 0.0)
        np.testing.assert_array_equal(state.V, V0)
        np.testing.assert_array_equal(state.gram_inv, inv0)

    def test_rejects_negative_weight(self):
        state = EllipsoidState(2, 1.0)
        with pytest.raises(ValueError):
            ellipsoid_rank_one_update(state, np.ones(2), -1.0, 0.0)

    def test_theta_hat_solves_least_squares(self):
        rng = np.random.default_rng(17)
        state = EllipsoidState(4, 0.1)
        X, y = [], []
        for _ in range(30):
            x = rng.normal(size=4)
            x /= max(1.0, np.linalg.norm(x))
            target = rng.normal()
            ellipsoid_rank_one_update(state, x, 1.0, target)
            X.append(x)
            y.append(target)
        X, y = np.array(X), np.array(y)
        oracle = np.linalg.solve(0.1 * np.eye(4) + X.T @ X, X.T @ y)
        np.testing.assert_allclose(state.theta_hat, oracle, atol=1e-8)

    def test_v_minus_lambda_identity_psd_and_det_growth(self):
        rng = np.random.default_rng(41)
        state = EllipsoidState(3, 2.0)
        last_det = np.linalg.det(state.V)
        for _ in range(25):
            x = rng.normal(size=3)
            x /= max(1.0, np.linalg.norm(x))
            ellipsoid_rank_one_update(state, x, rng.uniform(0, 2), 0.0)
            eigs = np.linalg.eigvalsh(state.V - 2.0 * np.eye(3))
            assert eigs.min() > -1e-10
            det = np.linalg.det(state.V)
            assert det >= last_det - 1e-12
            last_det = det

    def test_elliptical_potential_bound(self):
        # sum_s ||x_s||^2_{V_s^-1} <= 2 d log(1 + t/lam) for lam >= 1
        rng = np.random.default_rng(53)
        for traj in range(20):
            d = int(rng.integers(2, 9))
            t = int(rng.integers(50, 300))
            state = EllipsoidState(d, 1.0)
            total = 0.0
            for _ in range(t):
                x = rng.normal(size=d)
                x /= max(1.0, np.linalg.norm(x))
                total += float(x @ state.gram_inv @ x)
                ellipsoid_rank_one_update(state, x, 1.0, 0.0)
            assert total <= 2 * d * math.log(1 + t / 1.0) + 1e-9


class TestMvnSample:
    def test_empirical_covariance_near_identity(self):
        rng = np.random.default_rng(19)
        draws = mvn_sample(np.zeros(3), 1.0, np.eye(3), rng, size=100_000)
        cov = np.cov(draws.T)
        assert np.max(np.abs(cov - np.eye(3))) < 0.05

    def test_zero_scale_returns_mean(self):
        mean = np.array([1.0, -2.0])
        out = mvn_sample(mean, 0.0, np.eye(2), np.random.default_rng(0))
        np.testing.assert_allclose(out, mean)

    def test_seed_determinism(self):
        a = mvn_sample(np.zeros(4), 2.0, np.eye(4), np.random.default_rng(3))
        b = mvn_sample(np.zeros(4), 2.0, np.eye(4), np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_jitter_rescues_semidefinite(self):
        cov = np.zeros((2, 2))
        cov[0, 0] = 1.0  # rank deficient
        out = mvn_sample(np.zeros(2), 1.0, cov, np.random.default_rng(1))
        assert out.shape == (2,)

    def test_indefinite_covariance_raises(self):
        cov = np.array([[1.0, 0.0], [0.0, -1.0]])
        with pytest.raises(np.linalg.LinAlgError):
            mvn_sample(np.zeros(2), 1.0, cov, np.random.default_rng(1))
