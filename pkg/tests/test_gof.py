import math

import numpy as np
import pytest
from scipy import stats

from bvr_reliability.gof import fit_rayleigh, kolmogorov_sf, ks_statistic, ks_test
from bvr_reliability.model import RayleighParams, rayleigh_cdf, rayleigh_quantile


def rayleigh_loglik(theta, xs):
    return np.sum(np.log(2 * theta * xs) - theta * xs**2)


class TestFitRayleigh:
    def test_single_point(self):
        assert fit_rayleigh([1.0]).theta == 1.0

    def test_scaling(self, rng):
        xs = rng.rayleigh(2.0, 30)
        assert fit_rayleigh(3.0 * xs).theta == pytest.approx(fit_rayleigh(xs).theta / 9.0)

    def test_grid_search_oracle(self, rng):
        xs = rng.rayleigh(1.3, 40)
        theta = fit_rayleigh(xs).theta
        grid = np.linspace(0.2 * theta, 3 * theta, 20001)
        ll = [rayleigh_loglik(t, xs) for t in grid]
        assert grid[int(np.argmax(ll))] == pytest.approx(theta, abs=grid[1] - grid[0])

    def test_score_changes_sign(self, rng):
        xs = rng.rayleigh(0.7, 25)
        theta = fit_rayleigh(xs).theta
        s = lambda t: xs.size / t - np.sum(xs**2)
        assert s(0.99 * theta) > 0 > s(1.01 * theta)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            fit_rayleigh([1.0, 0.0])
        with pytest.raises(ValueError):
            fit_rayleigh([])


class TestKolmogorovSf:
    @pytest.mark.parametrize("t", [0.05, 0.3, 0.5, 0.8, 0.99, 1.0, 1.2, 1.8, 2.5, 4.0])
    def test_against_scipy(self, t):
        assert kolmogorov_sf(t) == pytest.approx(stats.kstwobign.sf(t), abs=1e-12)

    def test_edges(self):
        assert kolmogorov_sf(0.0) == 1.0
        assert kolmogorov_sf(50.0) == 0.0

    def test_monotone(self):
        ts = np.linspace(0.01, 3, 300)
        vals = [kolmogorov_sf(t) for t in ts]
        assert np.all(np.diff(vals) <= 1e-15)


class TestKs:
    def test_statistic_matches_scipy(self, rng):
        th = RayleighParams(0.9)
        xs = rng.rayleigh(1.0, 60)
        d = ks_statistic(xs, lambda v: rayleigh_cdf(th, v))
        assert d == pytest.approx(stats.kstest(xs, lambda v: rayleigh_cdf(th, v)).statistic, abs=1e-14)

    def test_quantile_grid(self):
        n = 20
        th = RayleighParams(1.0)
        xs = rayleigh_quantile(th, (np.arange(1, n + 1) - 0.5) / n)
        assert ks_test(xs, th).statistic == pytest.approx(0.5 / n, abs=1e-12)

    def test_scale_invariant_when_refit(self, rng):
        xs = rng.rayleigh(1.0, 30)
        assert ks_test(7.5 * xs).statistic == pytest.approx(ks_test(xs).statistic, abs=1e-12)

    def test_p_value_asymptotic(self, rng):
        xs = rng.rayleigh(1.0, 45)
        res = ks_test(xs)
        assert res.p_value == pytest.approx(stats.kstwobign.sf(math.sqrt(45) * res.statistic), abs=1e-10)
        assert 0 <= res.statistic <= 1

    def test_uefa_x1(self, uefa):
        res = ks_test(uefa.pairs.x)
        assert res.statistic == pytest.approx(0.0885, abs=0.002)
        assert res.p_value == pytest.approx(0.9341, abs=0.02)

    def test_ties_handled(self):
        res = ks_test([1.0, 1.0, 1.0, 2.0])
        assert 0 < res.statistic < 1
