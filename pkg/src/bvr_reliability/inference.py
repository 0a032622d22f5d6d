"""Confidence intervals and tests for R = P(Y < X).

Three routes are offered: the delta-method normal approximation, the
parametric percentile bootstrap, and the computational approach test (CAT),
which resimulates under the restricted MLE and, inverted over a grid of null
values, also yields an interval.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, stats

from . import _rng
from .estimation import (
    DEFAULT_OPTIONS,
    FitError,
    FitResult,
    SolverOptions,
    SufficientStats,
    fit_batch,
    fit_mle,
    restricted_fit,
)
from .model import BvrParams, PairedSample, sample_bvr_arrays

ALTERNATIVES = ("less", "greater", "two_sided")
MAX_FAILURE_RATE = 0.10


@dataclass(frozen=True)
class IntervalEstimate:
    lower: float
    upper: float
    level: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class TestResult:
    r0: float
    alternative: str
    alpha: float
    p_value: float
    reject: bool
    method: str
    statistic: object
    diagnostics: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this class


@dataclass(frozen=True)
class MonteCarloConfig:
    """Replicate budget and seeding for the simulation-based methods."""

    replicates: int = 1000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.replicates < 100:
            raise ValueError("at least 100 replicates are required")
        if self.workers < 1:
            raise ValueError("workers must be positive")


@dataclass(frozen=True)
class CatCurve:
    grid: np.ndarray
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray
    g_lower: np.ndarray  # polynomial coefficients, highest degree first
    g_upper: np.ndarray

    def eval_lower(self, r0):
        return np.polyval(self.g_lower, r0)

    def eval_upper(self, r0):
        return np.polyval(self.g_upper, r0)

    def to_dict(self) -> dict:
        return {k: np.asarray(getattr(self, k)).tolist()
                for k in ("grid", "lower_bounds", "upper_bounds", "g_lower", "g_upper")}


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def _check_alternative(alternative):
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")


# -- asymptotic ---------------------------------------------------------------

def asymptotic_ci(fit: FitResult, alpha: float = 0.05) -> IntervalEstimate:
    """Normal interval R-hat -/+ z_{1-alpha/2} sqrt(Sigma-hat)."""
    _check_alpha(alpha)
    if not fit.converged:
        raise ValueError("fit did not converge")
    sigma = fit.sigma
    if not (sigma >= 0 and math.isfinite(sigma)):
        raise ValueError(f"invalid delta-method variance {sigma}")
    half = stats.norm.ppf(1 - alpha / 2) * math.sqrt(sigma)
    lo, hi = fit.r_hat - half, fit.r_hat + half
    return IntervalEstimate(lo, hi, 1 - alpha, "asymptotic", {
        "r_hat": fit.r_hat,
        "sigma": sigma,
        "clamped": [max(lo, 0.0), min(hi, 1.0)],
    })


def asymptotic_test(fit: FitResult, r0: float, alternative: str = "greater",
                    alpha: float = 0.05) -> TestResult:
    """Wald-type test of H0: R = r0 using the delta-method variance."""
    _check_alpha(alpha)
    _check_alternative(alternative)
    if not 0 < r0 < 1:
        raise ValueError("r0 must lie in (0, 1)")
    if not fit.converged:
        raise ValueError("fit did not converge")
    sigma = fit.sigma
    if not (sigma > 0 and math.isfinite(sigma)):
        raise ValueError(f"degenerate delta-method variance {sigma}")
    se = math.sqrt(sigma)
    diff = fit.r_hat - r0
    z = diff / se
    if alternative == "greater":
        p = float(stats.norm.sf(z))
        reject = diff > stats.norm.ppf(1 - alpha) * se
    elif alternative == "less":
        p = float(stats.norm.cdf(z))
        reject = -diff > stats.norm.ppf(1 - alpha) * se
    else:
        p = float(min(1.0, 2 * stats.norm.sf(abs(z))))
        reject = abs(diff) > stats.norm.ppf(1 - alpha / 2) * se
    return TestResult(r0, alternative, alpha, p, bool(reject), "asymptotic", float(z),
                      {"r_hat": fit.r_hat, "sigma": sigma})


# -- replicate machinery ------------------------------------------------------

def _inclusive(options: SolverOptions) -> SolverOptions:
    return replace(options, allow_boundary=True)


def _replicate_block(params, n, seed, key, b, count, options):
    gen = _rng.substream(seed, *key, b)
    x, y = sample_bvr_arrays(params, n, gen, size=count)
    st = SufficientStats.from_arrays(x, y, options.tie_tolerance)
    bf = fit_batch(st, options)
    ok = bf.converged
    if not options.allow_boundary:
        # no x<y or no y<x pair: the MLE of lambda1 or lambda2 is 0, a fit failure
        ok = ok & (st.n1 > 0) & (st.n2 > 0)
    return np.where(ok, bf.r_hat, np.nan)


def simulate_r_hats(params: BvrParams, n: int, count: int, seed: int, key: tuple,
                    options: SolverOptions, workers: int = 1) -> np.ndarray:
    """MLEs of R over ``count`` samples of size ``n`` drawn from ``params``.

    Failed fits come back as NaN. Each block of replicates has its own
    sub-stream, so the output is independent of ``workers``.
    """
    jobs = [(b, stop - start) for b, start, stop in _rng.blocks(count)]

    def run(job):
        return _replicate_block(params, n, seed, key, job[0], job[1], options)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    return np.concatenate(parts)


def _clean(values, what):
    ok = np.isfinite(values)
    failed = int(np.sum(~ok))
    if failed > MAX_FAILURE_RATE * values.size:
        raise FitError(f"{failed} of {values.size} {what} fits failed",
                       {"failures": failed, "replicates": int(values.size)})
    return np.sort(values[ok]), failed


def order_statistic(sorted_values: np.ndarray, q: float) -> float:
    """Value at 1-based index ceil(q * M), i.e. the inverse empirical CDF at q."""
    m = sorted_values.size
    k = min(max(math.ceil(q * m - 1e-9), 1), m)
    return float(sorted_values[k - 1])


# -- bootstrap ----------------------------------------------------------------

def bootstrap_ci(sample: PairedSample, alpha: float = 0.05,
                 cfg: MonteCarloConfig | None = None,
                 options: SolverOptions | None = None,
                 fit: FitResult | None = None) -> IntervalEstimate:
    """Parametric percentile bootstrap interval for R."""
    _check_alpha(alpha)
    cfg = cfg or MonteCarloConfig()
    options = options or DEFAULT_OPTIONS
    fit = fit or fit_mle(sample, options)
    # one-sided resamples keep their boundary fit (R-hat 0 or 1); dropping them biases coverage
    r_star = simulate_r_hats(fit.params, sample.n, cfg.replicates, cfg.seed,
                             (_rng.BOOTSTRAP,), _inclusive(options), cfg.workers)
    r_sorted, failed = _clean(r_star, "bootstrap")
    lo = order_statistic(r_sorted, alpha / 2)
    hi = order_statistic(r_sorted, 1 - alpha / 2)
    return IntervalEstimate(lo, hi, 1 - alpha, "bootstrap", {
        "r_hat": fit.r_hat,
        "replicates": cfg.replicates,
        "failures": failed,
        "seed": cfg.seed,
    })


# -- computational approach test ---------------------------------------------

@dataclass(frozen=True)
class CatNull:
    """Null distribution of R-hat under the restricted MLE at r0."""

    r0: float
    restricted: BvrParams
    sorted_r_hats: np.ndarray
    failures: int

    def cutoffs(self, alpha: float, alternative: str) -> tuple[float, float]:
        a = alpha / 2 if alternative == "two_sided" else alpha
        return (order_statistic(self.sorted_r_hats, a),
                order_statistic(self.sorted_r_hats, 1 - a))

    def p_values(self, r_hat: float) -> tuple[float, float]:
        m = self.sorted_r_hats.size
        below = np.searchsorted(self.sorted_r_hats, r_hat, side="left")
        above = m - np.searchsorted(self.sorted_r_hats, r_hat, side="right")
        return below / m, above / m


def cat_null(sample: PairedSample, r0: float, cfg: MonteCarloConfig,
             options: SolverOptions | None = None, grid_index: int = 0) -> CatNull:
    """Resimulate R-hat ``cfg.replicates`` times under the restricted MLE at r0."""
    options = options or DEFAULT_OPTIONS
    rfit = restricted_fit(sample, r0, options)
    r0_hats = simulate_r_hats(rfit.params, sample.n, cfg.replicates, cfg.seed,
                              (_rng.CAT, grid_index), _inclusive(options), cfg.workers)
    r_sorted, failed = _clean(r0_hats, "CAT")
    return CatNull(r0, rfit.params, r_sorted, failed)


def cat_test(sample: PairedSample, r0: float, alternative: str = "greater",
             alpha: float = 0.05, cfg: MonteCarloConfig | None = None,
             options: SolverOptions | None = None,
             fit: FitResult | None = None) -> TestResult:
    """CAT of H0: R = r0.

    The decision uses the p-value (reject iff p < alpha); the order-statistic
    cutoffs are reported alongside in ``statistic``.
    """
    _check_alpha(alpha)
    _check_alternative(alternative)
    if not 0 < r0 < 1:
        raise ValueError("r0 must lie in (0, 1)")
    cfg = cfg or MonteCarloConfig()
    options = options or DEFAULT_OPTIONS
    fit = fit or fit_mle(sample, options)
    null = cat_null(sample, r0, cfg, options)
    p1, p2 = null.p_values(fit.r_hat)
    if alternative == "less":
        p = p1
    elif alternative == "greater":
        p = p2
    else:
        p = min(1.0, 2 * min(p1, p2))
    lo, hi = null.cutoffs(alpha, alternative)
    return TestResult(r0, alternative, alpha, float(p), bool(p < alpha), "cat",
                      {"lower_cutoff": lo, "upper_cutoff": hi}, {
                          "r_hat": fit.r_hat,
                          "p_less": float(p1),
                          "p_greater": float(p2),
                          "restricted": [null.restricted.lambda0, null.restricted.lambda1,
                                         null.restricted.lambda2],
                          "replicates": cfg.replicates,
                          "failures": null.failures,
                      })


def default_grid(fit: FitResult, k: int = 10) -> np.ndarray:
    """k equally spaced null values centred at R-hat, spanning +/- 4 sd."""
    sigma = fit.sigma
    sd = math.sqrt(sigma) if sigma > 0 and math.isfinite(sigma) else math.sqrt(0.25 / fit.n)
    lo = min(max(fit.r_hat - 4 * sd, 0.02), 0.98)
    hi = min(max(fit.r_hat + 4 * sd, 0.02), 0.98)
    if hi - lo < 0.05:
        mid = min(max(fit.r_hat, 0.045), 0.955)
        lo, hi = mid - 0.025, mid + 0.025
    return np.linspace(lo, hi, k)


def _solve_level(poly, target, lo, hi, what, curve):
    f = lambda r: np.polyval(poly, r) - target
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise FitError(f"fitted {what} curve does not cross R-hat on [{lo:.3f}, {hi:.3f}]",
                       {"curve": curve.to_dict(), "r_hat": target})
    return optimize.bisect(f, lo, hi, xtol=1e-6)


def cat_interval(sample: PairedSample, alpha: float = 0.05, grid=None,
                 cfg: MonteCarloConfig | None = None, degree: int = 2,
                 options: SolverOptions | None = None,
                 fit: FitResult | None = None) -> IntervalEstimate:
    """Interval from inverting the two-sided CAT over a grid of null values.

    Each grid value gets its own, independently seeded replicate set. The
    lower and upper cutoffs are smoothed by least-squares polynomials in r0
    and the interval is where those curves meet R-hat.
    """
    _check_alpha(alpha)
    if degree not in (1, 2, 3):
        raise ValueError("degree must be 1, 2 or 3")
    cfg = cfg or MonteCarloConfig()
    options = options or DEFAULT_OPTIONS
    fit = fit or fit_mle(sample, options)
    grid = default_grid(fit) if grid is None else np.asarray(grid, dtype=float)
    if not 8 <= grid.size <= 12:
        raise ValueError("grid must hold between 8 and 12 values")
    if np.any(np.diff(grid) <= 0) or grid[0] <= 0 or grid[-1] >= 1:
        raise ValueError("grid must be strictly increasing inside (0, 1)")

    lows, highs, failures = [], [], 0
    for j, r0 in enumerate(grid):
        null = cat_null(sample, float(r0), cfg, options, grid_index=j + 1)
        lo, hi = null.cutoffs(alpha, "two_sided")
        lows.append(lo)
        highs.append(hi)
        failures += null.failures
    lows = np.array(lows)
    highs = np.array(highs)
    curve = CatCurve(grid, lows, highs, np.polyfit(grid, lows, degree),
                     np.polyfit(grid, highs, degree))

    a = max(0.001, grid[0] - 0.05)
    b = min(0.999, grid[-1] + 0.05)
    warnings = []
    fine = np.linspace(a, b, 201)
    for name, poly in (("lower", curve.g_lower), ("upper", curve.g_upper)):
        if np.any(np.diff(np.polyval(poly, fine)) <= 0):
            warnings.append(f"fitted {name} curve is not monotone on [{a:.3f}, {b:.3f}]")
    r_hat = fit.r_hat
    upper = _solve_level(curve.g_lower, r_hat, a, b, "lower", curve)
    lower = _solve_level(curve.g_upper, r_hat, a, b, "upper", curve)
    lower, upper = min(lower, upper), max(lower, upper)
    return IntervalEstimate(float(lower), float(upper), 1 - alpha, "cat", {
        "r_hat": r_hat,
        "curve": curve.to_dict(),
        "degree": degree,
        "replicates": cfg.replicates,
        "failures": failures,
        "seed": cfg.seed,
        "fresh_draws_per_grid_point": True,
        "warnings": warnings,
    })
