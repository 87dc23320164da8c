import math

import numpy as np
import pytest

from semitail.errors import EmptySample, TooFewExceedances
from semitail.gpd import GpdParams, gpd_sample
from semitail.mean import (
    Method,
    MeanPosterior,
    draw_dirichlet_weights,
    lambda_variance_coefficient,
    mc_mean_oracle,
    posterior_mean_moments,
    semiparametric_bootstrap,
    semiparametric_mean,
    split_sample,
    treatment_effect,
)
from semitail.study import SimConfig, simulate_dgp
from semitail.tail import BetaGammaPrior, laplace_lambda, map_fit
from semitail.threshold import select_threshold, threshold_scan

REF = BetaGammaPrior()


def synthetic_split(m, n, xi, seed, u=30.0):
    g = np.random.default_rng(seed)
    bulk = g.exponential(10.0, 4 * m)
    bulk = bulk[bulk < u][:m]
    tail = u + gpd_sample(GpdParams(xi, 10.0), n, g)
    return split_sample(np.concatenate([bulk, tail]), u)


class TestSplit:
    def test_boundary_goes_to_tail(self):
        s = split_sample([1, 2, 5, 7], 5)
        np.testing.assert_array_equal(s.bulk, [1, 2])
        np.testing.assert_array_equal(s.exceedances.values, [0, 2])
        assert (s.m, s.n, s.N) == (2, 2, 4)

    def test_threshold_above_max(self):
        s = split_sample([1, 2, 3], 10)
        assert s.n == 0 and s.m == 3

    def test_empty(self):
        s = split_sample([], 1.0)
        assert s.m == 0 and s.n == 0

    def test_repeated_values_preserved(self):
        s = split_sample([1, 1, 1, 9, 9], 5)
        assert s.m == 3 and s.n == 2


class TestMoments:
    def test_hand_example(self):
        s = split_sample([1, 2, 5.5, 6.5], 5)
        post = posterior_mean_moments(s, 3.0, 0.0)
        assert post.mean == pytest.approx(4.75)
        # spread term by hand: (1-4.75)^2 + (2-4.75)^2 + 2 (8-4.75)^2 over 4 * 5
        assert post.variance == pytest.approx((3.75**2 + 2.75**2 + 2 * 3.25**2) / 20)

    def test_bulk_only(self):
        post = posterior_mean_moments(split_sample([1, 2, 3], 10))
        assert post.mean == 2 and post.variance == pytest.approx(1 / 6)
        assert post.method is Method.BULK_ONLY

    def test_empty(self):
        with pytest.raises(EmptySample):
            posterior_mean_moments(split_sample([], 1))

    @pytest.mark.parametrize("form", ["exact", "closed"])
    def test_linear_in_lambda_variance(self, form):
        s = split_sample([1, 2, 3, 7, 8, 9, 12], 6)
        m, n = s.m, s.n
        a = posterior_mean_moments(s, 4.0, 2.5, form=form).variance
        b = posterior_mean_moments(s, 4.0, 5.0, form=form).variance
        assert b - a == pytest.approx(lambda_variance_coefficient(m, n, form) * 2.5, rel=1e-12)

    def test_coefficients(self):
        m, n = 7, 3
        N = m + n
        assert lambda_variance_coefficient(m, n, "closed") == pytest.approx(2 * n**2 * (N - 0.5) / (N**2 * (N + 1)))
        assert lambda_variance_coefficient(m, n) == pytest.approx(n * (m + n * (N + 1)) / (N**2 * (N + 1)))
        with pytest.raises(ValueError):
            lambda_variance_coefficient(m, n, "other")

    def test_mean_identity(self, rng):
        z = rng.exponential(5.0, 500)
        s = split_sample(z, 8.0)
        post = posterior_mean_moments(s, s.exceedances.values.mean(), 1.0)
        assert post.mean == pytest.approx(z.mean(), rel=1e-12)

    def test_requires_lambda_moments(self):
        with pytest.raises(ValueError):
            posterior_mean_moments(split_sample([1, 5], 2))
        with pytest.raises(ValueError):
            posterior_mean_moments(split_sample([1, 5], 2), 1.0, -1.0)


class TestOracle:
    def test_point_mass_lambda(self):
        s = synthetic_split(150, 100, 0.5, 1)
        post = posterior_mean_moments(s, 20.0, 0.0)
        mean, var = mc_mean_oracle(s, [20.0], R=10**5, seed=2)
        mc_se_var = var * math.sqrt(2 / (10**5 - 1))
        assert abs(var - post.variance) < 3 * mc_se_var
        assert abs(mean - post.mean) < 3 * math.sqrt(var / 10**5)

    @pytest.mark.parametrize("m,n,xi", [(300, 100, 0.2), (1000, 200, 0.5), (100, 400, 0.8)])
    def test_law_of_total_variance(self, m, n, xi):
        s = synthetic_split(m, n, xi, m + n)
        lam = np.random.default_rng(0).normal(25.0, 4.0, 2000)
        post = posterior_mean_moments(s, lam.mean(), lam.var(ddof=1))
        _, var = mc_mean_oracle(s, lam, R=10**5, seed=3)
        assert abs(post.variance / var - 1) < 0.02

    def test_closed_form_multiplier_overcounts(self):
        s = synthetic_split(1000, 200, 0.5, 9)
        lam = np.random.default_rng(1).normal(25.0, 4.0, 2000)
        _, var = mc_mean_oracle(s, lam, R=10**5, seed=4)
        closed = posterior_mean_moments(s, lam.mean(), lam.var(ddof=1), form="closed").variance
        assert closed / var - 1 > 0.2

    def test_deterministic(self):
        s = synthetic_split(100, 100, 0.5, 1)
        assert mc_mean_oracle(s, [1.0, 2.0], R=10**4, seed=5) == mc_mean_oracle(s, [1.0, 2.0], R=10**4, seed=5)

    def test_convex_combination(self):
        s = split_sample([1.0, 10.0], 5.0)
        g = np.random.default_rng(0)
        for _ in range(1000):
            w = draw_dirichlet_weights(1, 1, g).theta
            mu = (w[0] * 1.0 + w[1] * (5.0 + 3.0)) / w.sum()
            assert 1.0 <= mu <= 8.0
        mean, _ = mc_mean_oracle(s, [3.0], R=10**4, seed=1)
        assert 1.0 < mean < 8.0

    def test_preconditions(self):
        s = synthetic_split(10, 10, 0.5, 1)
        with pytest.raises(ValueError):
            mc_mean_oracle(s, [1.0], R=100)
        with pytest.raises(ValueError):
            mc_mean_oracle(split_sample([1, 2], 10), [1.0])

    def test_weights(self):
        w = draw_dirichlet_weights(5, 3, 0)
        assert w.theta.shape == (6,) and np.all(w.theta > 0) and w.total == pytest.approx(w.theta.sum())


class TestSemiparametricBootstrap:
    def test_bulk_lower_bound(self):
        K = 4.0
        s = split_sample([K] * 50 + [10.0, 10.001, 10.002], 10.0)
        for r in semiparametric_bootstrap(s, BetaGammaPrior(5, 5), B=100, seed=1):
            assert r.mu_hat >= r.m_b * K / s.N - 1e-12
            assert r.m_b + r.n_b == s.N

    def test_centred_on_plug_in(self):
        s = synthetic_split(2000, 300, 0.3, 2)
        reps = semiparametric_bootstrap(s, REF, B=200, seed=3)
        p = map_fit(REF, s.exceedances)
        plug = (s.bulk.sum() + s.n * (s.u + p.sigma / (1 - p.xi))) / s.N
        mu = np.array([r.mu_hat for r in reps])
        assert abs(mu.mean() - plug) < 2 * mu.std(ddof=1) / math.sqrt(len(mu))

    def test_deterministic_across_threads(self):
        s = synthetic_split(200, 50, 0.5, 4)
        a = semiparametric_bootstrap(s, REF, B=100, seed=5, threads=1)
        b = semiparametric_bootstrap(s, REF, B=100, seed=5, threads=2)
        assert a == b

    def test_preconditions(self):
        with pytest.raises(TooFewExceedances):
            semiparametric_bootstrap(split_sample([1, 2, 6, 7], 5), REF, B=100)
        with pytest.raises(ValueError):
            semiparametric_bootstrap(synthetic_split(50, 50, 0.5, 1), REF, B=50)

    def test_agrees_with_posterior_sd(self):
        z = simulate_dgp(SimConfig(xi=0.5, n_total=20000), 6)
        u = select_threshold(threshold_scan(z)).u
        post = semiparametric_mean(z, u)
        mu = np.array([r.mu_hat for r in semiparametric_bootstrap(split_sample(z, u), REF, B=300, seed=7)])
        assert abs(mu.std(ddof=1) / post.sd - 1) < 0.25


class TestSemiparametricMean:
    def test_laplace_path(self):
        z = simulate_dgp(SimConfig(xi=0.5, n_total=20000), 1)
        post = semiparametric_mean(z, 40.0)
        s = split_sample(z, 40.0)
        p = map_fit(REF, s.exceedances)
        fit = laplace_lambda(REF, s.exceedances, p)
        ref = posterior_mean_moments(s, fit.lambda_hat, fit.variance)
        assert post.mean == ref.mean and post.variance == ref.variance
        assert post.xi_hat == p.xi and post.method is Method.LAPLACE

    def test_imh_path(self):
        z = simulate_dgp(SimConfig(xi=0.5, n_total=5000), 2)
        post = semiparametric_mean(z, 50.0, method="imh", draws=150, seed=3)
        assert post.method is Method.IMH and 0 < post.acceptance_rate <= 1

    def test_bulk_only_path(self):
        post = semiparametric_mean([1.0, 2.0, 3.0], 10.0)
        assert post.method is Method.BULK_ONLY

    def test_threshold_shift_consistency(self):
        # exactly GPD above 0, hence above any threshold
        z = gpd_sample(GpdParams(0.4, 10.0), 10**5, 8)
        a = semiparametric_mean(z, 5.0)
        b = semiparametric_mean(z, 25.0)
        assert abs(a.mean - b.mean) < 3 * math.sqrt(a.variance + b.variance)

    def test_covers_population_mean(self):
        cfg = SimConfig(xi=0.5)
        z = simulate_dgp(cfg, 11)
        u = select_threshold(threshold_scan(z)).u
        post = semiparametric_mean(z, u)
        assert abs(post.mean - cfg.population_mean) < 3 * post.sd


class TestTreatmentEffect:
    def post(self, mean, var):
        return MeanPosterior(mean, var, 0.0, 0.0, Method.LAPLACE)

    def test_examples(self):
        e = treatment_effect(self.post(5, 1), self.post(3, 1))
        assert e.gamma == 2 and e.sd == pytest.approx(math.sqrt(2))
        assert treatment_effect(self.post(5, 4), self.post(5, 4)).gamma == 0
        assert treatment_effect(self.post(5, 4), self.post(1, 0)).sd == 2
