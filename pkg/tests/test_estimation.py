import math

import numpy as np
import pytest

from bvr_reliability.estimation import (
    DEFAULT_OPTIONS,
    SIMULATION_OPTIONS,
    BoundaryFitError,
    FitError,
    SolverOptions,
    SufficientStats,
    classify,
    delta_variance,
    expected_class_counts,
    fisher_information,
    fit_batch,
    fit_mle,
    log_likelihood,
    natural_estimate,
    restricted_fit,
    restricted_log_likelihood,
    restricted_score,
    score,
)
from bvr_reliability.model import (
    BvrParams,
    PairedSample,
    class_probabilities,
    reliability,
    sample_bvr,
    sample_bvr_arrays,
)


def density_loglik(params: BvrParams, sample: PairedSample) -> float:
    """Sum of log densities of the three parts of the joint law, written out directly."""
    l0, l1, l2 = params.lambda0, params.lambda1, params.lambda2
    total = 0.0
    for x, y in sample:
        if x == y:
            total += math.log(2 * l0 * x) - (l0 + l1 + l2) * x * x
        elif y < x:
            a = l1 + l0
            total += math.log(4 * a * l2 * x * y) - a * x * x - l2 * y * y
        else:
            b = l2 + l0
            total += math.log(4 * b * l1 * x * y) - l1 * x * x - b * y * y
    return total


def fd_gradient(f, lam, rel=1e-6):
    lam = np.asarray(lam, dtype=float)
    g = np.empty_like(lam)
    for i in range(lam.size):
        h = rel * lam[i]
        up, dn = lam.copy(), lam.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2 * h)
    return g


def random_case(rng, n=None):
    truth = BvrParams(*rng.uniform(0.2, 3.0, 3))
    n = n or int(rng.integers(5, 60))
    sample = sample_bvr(truth, n, rng)
    at = BvrParams(*rng.uniform(0.2, 3.0, 3))
    return sample, at


class TestClassify:
    def test_small(self):
        c = classify(PairedSample.from_pairs([(1, 1), (1, 2), (2, 1)]))
        assert c.as_tuple() == (1, 1, 1)
        assert c.tied_indices == (0,)

    def test_tolerance(self):
        s = PairedSample.from_pairs([(1.0, 1.0 + 1e-12)])
        assert classify(s, 1e-9).n0 == 1
        assert classify(s, 0.0).n1 == 1

    def test_uefa(self, uefa):
        c = classify(uefa.pairs)
        assert c.as_tuple() == (14, 6, 17)
        assert c.n == 37
        assert len(c.tied_indices) == 14


class TestLogLikelihood:
    def test_tie(self):
        s = PairedSample.from_pairs([(1, 1)])
        assert log_likelihood(BvrParams(1, 1, 1), s) == pytest.approx(math.log(2) - 3)

    def test_y_less_than_x(self):
        s = PairedSample.from_pairs([(2, 1)])
        assert log_likelihood(BvrParams(1, 1, 1), s) == pytest.approx(4 * math.log(2) - 9)

    def test_density_oracle(self, rng):
        for _ in range(50):
            sample, at = random_case(rng)
            assert log_likelihood(at, sample) == pytest.approx(density_loglik(at, sample), rel=1e-12)

    def test_zero_rate_with_count_is_minus_inf(self):
        s = PairedSample.from_pairs([(1, 1), (2, 1), (1, 2)])
        assert log_likelihood(BvrParams(0, 1, 1), s) == -math.inf

    def test_zero_lambda0_without_ties_is_finite(self):
        s = PairedSample.from_pairs([(2, 1), (1, 2)])
        assert math.isfinite(log_likelihood(BvrParams(0, 1, 1), s))


class TestScore:
    def test_hand_value(self):
        s = PairedSample.from_pairs([(2, 1)])
        g = score(BvrParams(1, 1, 1), s)
        assert g[1] == pytest.approx(-3.5)

    def test_finite_difference(self, rng):
        for _ in range(100):
            sample, at = random_case(rng)
            fd = fd_gradient(lambda v: log_likelihood(BvrParams(*v), sample), at.as_array())
            g = score(at, sample)
            assert np.linalg.norm(g - fd) / np.linalg.norm(g) < 1e-6

    def test_zero_at_mle(self, uefa, uefa_fit):
        g = score(uefa_fit.params, uefa.pairs)
        # the rates are O(1e-4), so the score is O(n / lambda); compare relative to that
        assert np.all(np.abs(g * uefa_fit.params.as_array()) < 1e-8)


class TestExpectedCounts:
    def test_symmetric(self):
        np.testing.assert_allclose(expected_class_counts(BvrParams(1, 1, 1), 300), [100, 100, 100])

    def test_matches_probabilities(self, rng):
        for _ in range(50):
            p = BvrParams(*rng.uniform(0.01, 4, 3))
            e = expected_class_counts(p, 123)
            cp = class_probabilities(p)
            assert e.sum() == pytest.approx(123)
            np.testing.assert_allclose(e, 123 * np.array([cp.p_tie, cp.p_x_lt_y, cp.p_y_lt_x]),
                                       atol=1e-10)

    def test_simulated_class_counts(self):
        p = BvrParams(0.7, 1.0, 1.6)
        x, y = sample_bvr_arrays(p, 50, np.random.default_rng(5), size=2000)
        st = SufficientStats.from_arrays(x, y)
        counts = np.stack([st.n0, st.n1, st.n2], axis=1).astype(float)
        se = counts.std(axis=0, ddof=1) / math.sqrt(2000)
        assert np.all(np.abs(counts.mean(axis=0) - expected_class_counts(p, 50)) < 3 * se)


class TestFisherInformation:
    def test_off_diagonal_zero(self, rng):
        for _ in range(20):
            info = fisher_information(BvrParams(*rng.uniform(0.1, 3, 3)), 10)
            assert info.entries[1, 2] == 0.0
            assert info.entries[2, 1] == 0.0

    def test_positive_definite_on_grid(self):
        for l0 in (0.05, 0.5, 2.0):
            for l1 in (0.1, 1.0, 5.0):
                for l2 in (0.1, 1.0, 5.0):
                    e = fisher_information(BvrParams(l0, l1, l2), 1).entries
                    np.testing.assert_allclose(e, e.T)
                    assert np.all(np.linalg.eigvalsh(e) > 0)

    def test_monte_carlo_hessian(self):
        # negative finite-difference Hessian of the log-likelihood, averaged over samples
        p = BvrParams(0.8, 1.2, 1.5)
        n, reps = 200, 600
        x, y = sample_bvr_arrays(p, n, np.random.default_rng(6), size=reps)
        from bvr_reliability.estimation import _full_loglik

        st = SufficientStats.from_arrays(x, y)
        lam = p.as_array()
        h = 1e-4 * lam
        H = np.zeros((reps, 3, 3))
        for i in range(3):
            for j in range(3):
                def f(di, dj):
                    v = lam.copy()
                    v[i] += di
                    v[j] += dj
                    return _full_loglik(np.tile(v, (reps, 1)), st)
                H[:, i, j] = (f(h[i], h[j]) - f(h[i], -h[j]) - f(-h[i], h[j]) + f(-h[i], -h[j])) \
                    / (4 * h[i] * h[j])
        neg = -H
        mean = neg.mean(axis=0)
        se = neg.std(axis=0, ddof=1) / math.sqrt(reps)
        expected = fisher_information(p, n).entries
        assert np.all(np.abs(mean - expected) <= 3 * se + 1e-6 * np.abs(expected))

    def test_singular_rejected(self):
        with pytest.raises(ValueError):
            fisher_information(BvrParams(0, 1, 1), 10)


class TestDeltaVariance:
    def test_gradient_unit_rates(self):
        dv = delta_variance(BvrParams(1, 1, 1), 10)
        np.testing.assert_allclose(dv.gradient, [-1 / 9, -1 / 9, 2 / 9])

    def test_scales_like_inverse_n(self):
        p = BvrParams(0.4, 1.7, 0.9)
        ratio = delta_variance(p, 400).sigma / delta_variance(p, 200).sigma
        assert ratio == pytest.approx(0.5, abs=1e-10)

    def test_matches_simulated_variance(self):
        p = BvrParams(1.0, 1.0, 1.0)
        x, y = sample_bvr_arrays(p, 200, np.random.default_rng(8), size=2000)
        bf = fit_batch(SufficientStats.from_arrays(x, y))
        assert bf.converged.all()
        var = bf.r_hat.var(ddof=1)
        assert var == pytest.approx(delta_variance(p, 200).sigma, rel=0.15)


class TestFitMle:
    def test_uefa(self, uefa_fit):
        assert uefa_fit.r_hat == pytest.approx(0.4228, abs=5e-4)
        assert uefa_fit.converged
        assert uefa_fit.boundary == ()
        assert uefa_fit.final_score_norm < DEFAULT_OPTIONS.tol

    def test_large_sample_consistency(self):
        truth = BvrParams(1.5, 1.0, 1.0)
        fit = fit_mle(sample_bvr(truth, 50000, np.random.default_rng(10)))
        np.testing.assert_allclose(fit.params.as_array(), truth.as_array(), rtol=0.03)
        assert abs(fit.r_hat - 1 / 3.5) < 0.01

    def test_swap_exchanges_rates(self, rng):
        s = sample_bvr(BvrParams(0.5, 1.0, 2.0), 40, rng)
        a = fit_mle(s).params
        b = fit_mle(s.swapped()).params
        assert b.lambda0 == pytest.approx(a.lambda0, rel=1e-8)
        assert b.lambda1 == pytest.approx(a.lambda2, rel=1e-8)
        assert b.lambda2 == pytest.approx(a.lambda1, rel=1e-8)

    def test_beats_nearby_points(self, rng):
        s = sample_bvr(BvrParams(1, 1, 1), 30, rng)
        fit = fit_mle(s, SIMULATION_OPTIONS)
        for _ in range(200):
            other = BvrParams(*(fit.params.as_array() * rng.uniform(0.8, 1.2, 3)))
            assert log_likelihood(other, s) <= fit.log_likelihood + 1e-12

    def test_no_ties_gives_independence_submodel(self):
        s = sample_bvr(BvrParams(0, 1, 2), 30, np.random.default_rng(12))
        fit = fit_mle(s)
        assert fit.boundary == ("lambda0",)
        assert fit.params.lambda0 == 0.0
        assert fit.params.lambda1 == pytest.approx(s.n / np.sum(s.x**2), rel=1e-8)
        assert fit.params.lambda2 == pytest.approx(s.n / np.sum(s.y**2), rel=1e-8)

    def test_one_sided_sample_rejected_by_default(self):
        s = PairedSample.from_pairs([(2, 1), (3, 1), (1, 1)])
        with pytest.raises(BoundaryFitError) as exc:
            fit_mle(s)
        assert exc.value.diagnostics["counts"] == (1, 0, 2)

    def test_one_sided_sample_allowed(self):
        s = PairedSample.from_pairs([(2, 1), (3, 1), (1, 1)])
        fit = fit_mle(s, SIMULATION_OPTIONS)
        assert fit.params.lambda1 == 0.0
        assert "lambda1" in fit.boundary

    def test_boundary_is_constrained_maximum(self, rng):
        # on one-sided samples the fit must beat every interior point tried
        s = PairedSample.from_pairs([(2, 1), (3, 1.5), (1, 1), (0.7, 0.2)])
        fit = fit_mle(s, SIMULATION_OPTIONS)
        for _ in range(500):
            other = BvrParams(*rng.uniform(1e-3, 5, 3))
            assert log_likelihood(other, s) <= fit.log_likelihood + 1e-10

    def test_scale_equivariance(self, rng):
        s = sample_bvr(BvrParams(0.6, 1.4, 0.8), 40, rng)
        a = fit_mle(s)
        for c in (1e-3, 0.37, 12.0, 1e3):
            b = fit_mle(s.scaled(c))
            np.testing.assert_allclose(b.params.as_array(), a.params.as_array() / c**2, rtol=1e-7)
            assert b.r_hat == pytest.approx(a.r_hat, abs=1e-9)

    def test_iteration_cap(self, uefa):
        with pytest.raises(FitError):
            fit_mle(uefa.pairs, SolverOptions(max_iter=1, tol=1e-300))


class TestBatch:
    def test_batch_matches_single(self, rng):
        x, y = sample_bvr_arrays(BvrParams(1, 1, 1), 15, rng, size=40)
        bf = fit_batch(SufficientStats.from_arrays(x, y))
        for b in range(40):
            one = fit_mle(PairedSample(x[b], y[b]), SIMULATION_OPTIONS)
            assert one.r_hat == pytest.approx(bf.r_hat[b], abs=1e-12)

    def test_small_samples_all_converge(self):
        x, y = sample_bvr_arrays(BvrParams(2.5, 1, 1), 5, np.random.default_rng(13), size=5000)
        bf = fit_batch(SufficientStats.from_arrays(x, y))
        assert bf.converged.all()
        assert np.all((bf.r_hat >= 0) & (bf.r_hat <= 1))


class TestNaturalEstimate:
    def test_uefa(self, uefa):
        assert natural_estimate(uefa.pairs) == pytest.approx(17 / 37)

    def test_all_y_below(self):
        assert natural_estimate(PairedSample.from_pairs([(2, 1), (5, 3)])) == 1.0

    def test_binomial_oracle(self):
        x, y = sample_bvr_arrays(BvrParams(1, 1, 1), 100, np.random.default_rng(14), size=2000)
        r = np.mean(y < x, axis=1)
        assert abs(r.mean() - 1 / 3) < 3 * r.std(ddof=1) / math.sqrt(2000)
        assert r.var(ddof=1) == pytest.approx((1 / 3) * (2 / 3) / 100, rel=0.2)


class TestRestricted:
    def test_at_r_hat_matches_unrestricted(self, uefa, uefa_fit):
        rf = restricted_fit(uefa.pairs, uefa_fit.r_hat)
        assert rf.log_likelihood == pytest.approx(uefa_fit.log_likelihood, abs=1e-8)
        assert rf.lambda0 == pytest.approx(uefa_fit.params.lambda0, rel=1e-6)
        assert rf.lambda1 == pytest.approx(uefa_fit.params.lambda1, rel=1e-6)

    def test_stationary(self, uefa):
        for r0 in (0.2, 0.5, 0.8):
            rf = restricted_fit(uefa.pairs, r0)
            g = restricted_score(rf.lambda0, rf.lambda1, r0, uefa.pairs)
            assert np.linalg.norm(g * np.array([rf.lambda0, rf.lambda1])) < 1e-8

    def test_score_finite_difference(self, rng):
        for _ in range(50):
            sample, at = random_case(rng)
            r0 = rng.uniform(0.05, 0.95)
            f = lambda v: restricted_log_likelihood(v[0], v[1], r0, sample)
            fd = fd_gradient(f, [at.lambda0, at.lambda1])
            g = restricted_score(at.lambda0, at.lambda1, r0, sample)
            assert np.linalg.norm(g - fd) / np.linalg.norm(g) < 1e-6

    def test_matches_full_likelihood(self, rng):
        sample, at = random_case(rng, n=30)
        r0 = 0.37
        p = BvrParams.from_reliability(r0, at.lambda0, at.lambda1)
        assert restricted_log_likelihood(at.lambda0, at.lambda1, r0, sample) == \
            pytest.approx(log_likelihood(p, sample), rel=1e-12)

    def test_nested_inequality(self, rng):
        for _ in range(10):
            sample = sample_bvr(BvrParams(*rng.uniform(0.3, 2, 3)), 25, rng)
            full = fit_mle(sample, SIMULATION_OPTIONS)
            for r0 in np.arange(0.1, 0.95, 0.1):
                rf = restricted_fit(sample, float(r0), SIMULATION_OPTIONS)
                assert rf.log_likelihood <= full.log_likelihood + 1e-9
                assert reliability(rf.params) == pytest.approx(r0, abs=1e-12)

    def test_r0_domain(self, uefa):
        with pytest.raises(ValueError):
            restricted_fit(uefa.pairs, 1.0)
