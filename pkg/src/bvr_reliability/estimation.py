"""Maximum likelihood estimation of the BVR rates and of R = P(Y < X).

The log-likelihood of a BVR sample depends on the data only through the class
counts (n0 ties, n1 with x < y, n2 with y < x) and the three sums of squares
of x, y and max(x, y), plus an additive constant. Every fit below works from
those sufficient statistics, which is what makes the batched fitting used by
the simulation code cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _solver
from .model import BvrParams, PairedSample, reliability, reliability_gradient

PARAM_NAMES = ("lambda0", "lambda1", "lambda2")

# Log terms of the full likelihood: rows of A act on (l0, l1, l2); the weights
# are (n0, n1, n2, n1, n2) and the linear coefficients (Sm, Sx, Sy).
_FULL_TERMS = np.array([
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
])


class FitError(RuntimeError):
    """Raised when a likelihood fit cannot produce a usable estimate."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class BoundaryFitError(FitError):
    pass


class ConvergenceError(FitError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    """Settings for the Newton solver.

    ``tol`` bounds the Euclidean norm of (lambda_i * dL/dlambda_i) / n,
    a scale-free version of the score. ``allow_boundary`` accepts MLEs with
    lambda1 or lambda2 on the boundary (needed inside simulations, where
    samples without x < y or y < x observations do occur).
    """

    tol: float = 1e-10
    max_iter: int = 200
    tie_tolerance: float = 0.0
    allow_boundary: bool = False


DEFAULT_OPTIONS = SolverOptions()
SIMULATION_OPTIONS = SolverOptions(allow_boundary=True)


@dataclass(frozen=True)
class ClassCounts:
    n0: int
    n1: int
    n2: int
    tied_indices: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.tied_indices) != self.n0:
            raise ValueError("tied_indices must have n0 elements")

    @property
    def n(self) -> int:
        return self.n0 + self.n1 + self.n2

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.n0, self.n1, self.n2)


def _tie_mask(x, y, tie_tolerance):
    if tie_tolerance < 0:
        raise ValueError("tie_tolerance must be nonnegative")
    if tie_tolerance == 0:
        return x == y
    return np.abs(x - y) <= tie_tolerance


def classify(sample: PairedSample, tie_tolerance: float = 0.0) -> ClassCounts:
    """Split a sample into ties (|x - y| <= tol), x < y and y < x."""
    if sample.n == 0:
        raise ValueError("empty sample")
    x, y = sample.x, sample.y
    tie = _tie_mask(x, y, tie_tolerance)
    n1 = int(np.sum(~tie & (x < y)))
    n2 = int(np.sum(~tie & (y < x)))
    tied = tuple(int(i) for i in np.flatnonzero(tie))
    return ClassCounts(len(tied), n1, n2, tied)


@dataclass(frozen=True)
class SufficientStats:
    """Batched sufficient statistics; every field is an array of shape (B,)."""

    n0: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    sum_x2: np.ndarray
    sum_y2: np.ndarray
    sum_max2: np.ndarray
    sum_min2: np.ndarray
    const: np.ndarray

    @property
    def n(self) -> np.ndarray:
        return self.n0 + self.n1 + self.n2

    def __len__(self):
        return int(self.n0.shape[0])

    @classmethod
    def from_arrays(cls, x, y, tie_tolerance: float = 0.0) -> "SufficientStats":
        """Statistics for samples stored row-wise in arrays of shape (B, n)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        tie = _tie_mask(x, y, tie_tolerance)
        n0 = tie.sum(axis=1)
        n1 = (~tie & (x < y)).sum(axis=1)
        n2 = (~tie & (y < x)).sum(axis=1)
        mx = np.maximum(x, y)
        n = x.shape[1]
        const = ((2 * n - n0) * math.log(2.0)
                 + np.log(x).sum(axis=1) + np.log(y).sum(axis=1)
                 - np.where(tie, np.log(mx), 0.0).sum(axis=1))
        return cls(n0, n1, n2, (x**2).sum(axis=1), (y**2).sum(axis=1),
                   (mx**2).sum(axis=1), (np.minimum(x, y) ** 2).sum(axis=1), const)

    @classmethod
    def from_sample(cls, sample: PairedSample, tie_tolerance: float = 0.0) -> "SufficientStats":
        return cls.from_arrays(sample.x[None, :], sample.y[None, :], tie_tolerance)

    def weights(self) -> np.ndarray:
        return np.stack([self.n0, self.n1, self.n2, self.n1, self.n2], axis=1).astype(float)

    def linear(self) -> np.ndarray:
        return np.stack([self.sum_max2, self.sum_x2, self.sum_y2], axis=1)


def _full_loglik(lam: np.ndarray, st: SufficientStats) -> np.ndarray:
    return st.const + _solver.objective(_FULL_TERMS, st.weights(), st.linear(), lam)


def log_likelihood(params: BvrParams, sample: PairedSample,
                   tie_tolerance: float = 0.0) -> float:
    """Log-likelihood of a sample, with the tied set as the singular part.

    Returns ``-inf`` when a zero rate meets a nonzero count that needs it
    (e.g. ties with lambda0 = 0).
    """
    st = SufficientStats.from_sample(sample, tie_tolerance)
    return float(_full_loglik(params.as_array()[None, :], st)[0])


def score(params: BvrParams, sample: PairedSample, tie_tolerance: float = 0.0) -> np.ndarray:
    """Gradient of the log-likelihood in (lambda0, lambda1, lambda2)."""
    lam = params.as_array()
    if np.any(lam <= 0):
        raise ValueError("score requires strictly positive rates")
    c = classify(sample, tie_tolerance)
    l0, l1, l2 = lam
    x2 = float(np.sum(sample.x**2))
    y2 = float(np.sum(sample.y**2))
    m2 = float(np.sum(np.maximum(sample.x, sample.y) ** 2))
    return np.array([
        c.n0 / l0 + c.n2 / (l1 + l0) + c.n1 / (l2 + l0) - m2,
        c.n1 / l1 + c.n2 / (l1 + l0) - x2,
        c.n2 / l2 + c.n1 / (l2 + l0) - y2,
    ])


def expected_class_counts(params: BvrParams, n: int) -> np.ndarray:
    """(E[N0], E[N1], E[N2]) in the unsimplified phi form."""
    l0, l1, l2 = params.as_array()
    s = params.total
    phi1 = l2 / s
    phi2 = l1 / s
    e0 = (1 - (phi1 + phi2)) * n
    e1 = l1 / (l1 + l0) * (1 - phi1) * n if l1 + l0 > 0 else 0.0
    e2 = l2 / (l2 + l0) * (1 - phi2) * n if l2 + l0 > 0 else 0.0
    return np.array([e0, e1, e2])


@dataclass(frozen=True)
class InformationMatrix:
    """Expected Fisher information of n observations.

    For boundary fits only the ``free`` coordinates carry information; the
    rows and columns of fixed coordinates are zero.
    """

    entries: np.ndarray
    n: int
    free: tuple[bool, bool, bool] = (True, True, True)

    @property
    def per_observation(self) -> np.ndarray:
        return self.entries / self.n

    def covariance(self) -> np.ndarray:
        """Inverse of the free block, embedded in a 3x3 matrix."""
        idx = np.flatnonzero(self.free)
        block = self.entries[np.ix_(idx, idx)]
        cond = np.linalg.cond(block) if block.size else np.inf
        if not np.isfinite(cond) or cond > 1e14:
            raise np.linalg.LinAlgError(f"information matrix is singular (condition {cond:.3g})")
        out = np.zeros((3, 3))
        out[np.ix_(idx, idx)] = np.linalg.inv(block)
        return out


def _information_batch(lam: np.ndarray, n, free: np.ndarray | None = None) -> np.ndarray:
    """Expected information for rows of ``lam`` (B, 3); fixed coordinates zeroed."""
    lam = np.atleast_2d(lam)
    n = np.broadcast_to(np.asarray(n, dtype=float), lam.shape[:1])
    if free is None:
        free = np.ones(lam.shape, dtype=bool)
    l0, l1, l2 = lam.T
    s = lam.sum(axis=1)
    e1 = n * l1 / s
    e2 = n * l2 / s
    with np.errstate(divide="ignore", invalid="ignore"):
        # e_i / l_i**2 simplifies to n / (s l_i)
        d0 = np.where(free[:, 0], n / (s * l0), 0.0)
        d1 = np.where(free[:, 1], n / (s * l1), 0.0)
        d2 = np.where(free[:, 2], n / (s * l2), 0.0)
        a = np.where(e2 > 0, e2 / (l1 + l0) ** 2, 0.0)
        b = np.where(e1 > 0, e1 / (l2 + l0) ** 2, 0.0)
    info = np.empty(lam.shape[:1] + (3, 3))
    info[:, 0, 0] = d0 + a + b
    info[:, 1, 1] = d1 + a
    info[:, 2, 2] = d2 + b
    info[:, 0, 1] = info[:, 1, 0] = a
    info[:, 0, 2] = info[:, 2, 0] = b
    info[:, 1, 2] = info[:, 2, 1] = 0.0
    mask = free[:, :, None] & free[:, None, :]
    return np.where(mask, info, 0.0)


def fisher_information(params: BvrParams, n: int) -> InformationMatrix:
    """Negative expected Hessian of the log-likelihood for ``n`` observations."""
    lam = params.as_array()
    if np.any(lam <= 0):
        raise ValueError("Fisher information requires strictly positive rates")
    return InformationMatrix(_information_batch(lam[None, :], n)[0], int(n))


@dataclass(frozen=True)
class DeltaVariance:
    gradient: np.ndarray
    covariance: np.ndarray
    sigma: float


def _delta_from_info(params: BvrParams, info: InformationMatrix) -> DeltaVariance:
    try:
        cov = info.covariance()
    except np.linalg.LinAlgError as exc:
        raise FitError(str(exc), {"information": info.entries.tolist()}) from exc
    grad = reliability_gradient(params)
    return DeltaVariance(grad, cov, float(grad @ cov @ grad))


def delta_variance(params: BvrParams, n: int) -> DeltaVariance:
    """Delta-method variance of R-hat: B' I^{-1} B at ``params``."""
    return _delta_from_info(params, fisher_information(params, n))


def delta_sigma_batch(lam: np.ndarray, n, zero_mask: np.ndarray | None = None) -> np.ndarray:
    """Vectorized delta-method variance for many fits; NaN where singular."""
    lam = np.atleast_2d(lam)
    free = np.ones(lam.shape, dtype=bool) if zero_mask is None else ~zero_mask
    info = _information_batch(lam, n, free)
    # fixed coordinates get an identity block and a zero gradient entry
    eye = np.eye(3)[None, :, :]
    fixed_diag = (~free)[:, :, None] & (~free)[:, None, :] & (eye > 0)
    info = np.where(fixed_diag, 1.0, info)
    s = lam.sum(axis=1)
    grad = np.stack([-lam[:, 2] / s**2, -lam[:, 2] / s**2, (lam[:, 0] + lam[:, 1]) / s**2], axis=1)
    grad = np.where(free, grad, 0.0)
    out = np.full(lam.shape[0], np.nan)
    ok = np.all(np.isfinite(info), axis=(1, 2))
    if ok.any():
        sol = np.linalg.solve(info[ok], grad[ok][..., None])[..., 0]
        out[ok] = np.einsum("bi,bi->b", grad[ok], sol)
    return out


@dataclass(frozen=True)
class FitResult:
    params: BvrParams
    r_hat: float
    counts: ClassCounts
    info: InformationMatrix
    delta: DeltaVariance | None
    log_likelihood: float
    converged: bool
    iterations: int
    final_score_norm: float
    boundary: tuple[str, ...] = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.counts.n

    @property
    def sigma(self) -> float:
        return self.delta.sigma if self.delta is not None else float("nan")


@dataclass(frozen=True)
class BatchFit:
    """Vectorized fit output: arrays over a batch of samples."""

    lam: np.ndarray
    r_hat: np.ndarray
    log_likelihood: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    score_norm: np.ndarray
    zero_mask: np.ndarray

    def sigma(self, n) -> np.ndarray:
        return delta_sigma_batch(self.lam, n, self.zero_mask)


def _initial_guess(st: SufficientStats) -> tuple[np.ndarray, np.ndarray]:
    """Scale k = n / sum(min^2) and starting rates in units of k."""
    n = st.n.astype(float)
    k = n / st.sum_min2
    counts = np.stack([st.n0, st.n1, st.n2], axis=1) / n[:, None]
    return k, np.maximum(counts, 0.5 / n[:, None])


def fit_batch(st: SufficientStats, options: SolverOptions = SIMULATION_OPTIONS) -> BatchFit:
    """MLE of (l0, l1, l2) for every sample of a batch.

    Zero rates are allowed wherever the counts permit them; the caller
    decides whether such boundary fits are acceptable.
    """
    k, mu0 = _initial_guess(st)
    sol = _solver.maximize(_FULL_TERMS, st.weights(), st.linear() * k[:, None], mu0,
                           st.n.astype(float), tol=options.tol, max_iter=options.max_iter)
    lam = sol.mu * k[:, None]
    r_hat = lam[:, 2] / lam.sum(axis=1)
    return BatchFit(lam, r_hat, _full_loglik(lam, st), sol.converged, sol.iterations,
                    sol.score_norm, sol.zero_mask)


def fit_mle(sample: PairedSample, options: SolverOptions | None = None) -> FitResult:
    """Maximum likelihood fit of the BVR rates and R-hat.

    A sample without ties has its likelihood maximized over lambda0 >= 0,
    which in practice lands on the independence submodel
    (l1 = n/sum x^2, l2 = n/sum y^2); this is flagged in ``boundary``.
    Samples with no x < y or no y < x pair raise BoundaryFitError unless
    ``options.allow_boundary`` is set.
    """
    options = options or DEFAULT_OPTIONS
    counts = classify(sample, options.tie_tolerance)
    diag = {"counts": counts.as_tuple()}
    if not options.allow_boundary and (counts.n1 == 0 or counts.n2 == 0):
        raise BoundaryFitError(
            f"no {'x<y' if counts.n1 == 0 else 'y<x'} observations: "
            "the MLE of lambda1 or lambda2 is on the boundary", diag)
    st = SufficientStats.from_sample(sample, options.tie_tolerance)
    bf = fit_batch(st, options)
    lam = bf.lam[0]
    zero = bf.zero_mask[0]
    if not bf.converged[0]:
        raise ConvergenceError(
            f"solver did not converge in {options.max_iter} iterations",
            {**diag, "last_iterate": lam.tolist(), "score_norm": float(bf.score_norm[0])})
    params = BvrParams.from_array(lam)
    free = tuple(bool(f) for f in ~zero)
    info = InformationMatrix(_information_batch(lam[None, :], sample.n, ~zero[None, :])[0],
                             sample.n, free)
    try:
        delta = _delta_from_info(params, info)
    except FitError:
        delta = None
    boundary = tuple(name for name, z in zip(PARAM_NAMES, zero) if z)
    return FitResult(
        params=params,
        r_hat=reliability(params),
        counts=counts,
        info=info,
        delta=delta,
        log_likelihood=float(bf.log_likelihood[0]),
        converged=True,
        iterations=int(bf.iterations[0]),
        final_score_norm=float(bf.score_norm[0]),
        boundary=boundary,
        diagnostics=diag,
    )


def natural_estimate(sample: PairedSample) -> float:
    """Fraction of observations with y < x."""
    return float(np.sum(sample.y < sample.x)) / sample.n


# -- restricted fit under R = r0 --------------------------------------------

def _restricted_terms(r0: float) -> np.ndarray:
    c = r0 / (1 - r0)
    # rows act on (l0, l1): l0, l1, l0 + l1, l0 + l2 = (c+1) l0 + c l1
    return np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [c + 1.0, c]])


def _restricted_parts(st: SufficientStats, r0: float):
    c = r0 / (1 - r0)
    # l2 = c (l0 + l1): log l2 and log(l1 + l0) merge into 2 n2 log(l0 + l1)
    W = np.stack([st.n0, st.n1, 2 * st.n2, st.n1], axis=1).astype(float)
    C = np.stack([st.sum_max2 + c * st.sum_y2, st.sum_x2 + c * st.sum_y2], axis=1)
    const = st.const + st.n2 * math.log(c)
    return W, C, const


def _check_r0(r0):
    if not 0 < r0 < 1:
        raise ValueError(f"r0 must lie in (0, 1), got {r0}")


def restricted_log_likelihood(lambda0, lambda1, r0, sample: PairedSample,
                              tie_tolerance: float = 0.0) -> float:
    """Log-likelihood with lambda2 tied to (lambda0, lambda1) through R = r0."""
    _check_r0(r0)
    st = SufficientStats.from_sample(sample, tie_tolerance)
    W, C, const = _restricted_parts(st, r0)
    mu = np.array([[lambda0, lambda1]], dtype=float)
    return float(const[0] + _solver.objective(_restricted_terms(r0), W, C, mu)[0])


def restricted_score(lambda0, lambda1, r0, sample: PairedSample,
                     tie_tolerance: float = 0.0) -> np.ndarray:
    """Analytic gradient of the restricted log-likelihood in (lambda0, lambda1).

    d/dl0 = n0/l0 + 2 n2/(l0+l1) + n1/(l0 + r0 l1) - Sm - c Sy
    d/dl1 = n1/l1 + 2 n2/(l0+l1) + n1 r0/(l0 + r0 l1) - Sx - c Sy
    with c = r0 / (1 - r0).
    """
    _check_r0(r0)
    if lambda0 <= 0 or lambda1 <= 0:
        raise ValueError("restricted score requires positive rates")
    c = classify(sample, tie_tolerance)
    k = r0 / (1 - r0)
    x2 = float(np.sum(sample.x**2))
    y2 = float(np.sum(sample.y**2))
    m2 = float(np.sum(np.maximum(sample.x, sample.y) ** 2))
    mix = lambda0 + r0 * lambda1
    return np.array([
        c.n0 / lambda0 + 2 * c.n2 / (lambda0 + lambda1) + c.n1 / mix - m2 - k * y2,
        c.n1 / lambda1 + 2 * c.n2 / (lambda0 + lambda1) + c.n1 * r0 / mix - x2 - k * y2,
    ])


@dataclass(frozen=True)
class RestrictedFit:
    lambda0: float
    lambda1: float
    r0: float
    implied_lambda2: float
    log_likelihood: float
    converged: bool
    iterations: int = 0
    final_score_norm: float = 0.0
    boundary: tuple[str, ...] = ()

    @property
    def params(self) -> BvrParams:
        return BvrParams(self.lambda0, self.lambda1, self.implied_lambda2)


def restricted_fit_batch(st: SufficientStats, r0: float,
                         options: SolverOptions = SIMULATION_OPTIONS):
    """Restricted MLE of (l0, l1) for a batch; returns (lam01, loglik, solution)."""
    _check_r0(r0)
    W, C, const = _restricted_parts(st, r0)
    k, mu0 = _initial_guess(st)
    sol = _solver.maximize(_restricted_terms(r0), W, C * k[:, None], mu0[:, :2],
                           st.n.astype(float), tol=options.tol, max_iter=options.max_iter)
    lam = sol.mu * k[:, None]
    ll = const + _solver.objective(_restricted_terms(r0), W, C, lam)
    return lam, ll, sol


def restricted_fit(sample: PairedSample, r0: float,
                   options: SolverOptions | None = None) -> RestrictedFit:
    """Maximize the likelihood over (lambda0, lambda1) subject to R = r0."""
    options = options or DEFAULT_OPTIONS
    _check_r0(r0)
    counts = classify(sample, options.tie_tolerance)
    if not options.allow_boundary and (counts.n1 == 0 or counts.n2 == 0):
        raise BoundaryFitError("restricted fit needs both x<y and y<x observations",
                               {"counts": counts.as_tuple()})
    st = SufficientStats.from_sample(sample, options.tie_tolerance)
    lam, ll, sol = restricted_fit_batch(st, r0, options)
    if not sol.converged[0]:
        raise ConvergenceError("restricted fit did not converge",
                               {"last_iterate": lam[0].tolist()})
    l0, l1 = (float(v) for v in lam[0])
    return RestrictedFit(
        lambda0=l0,
        lambda1=l1,
        r0=r0,
        implied_lambda2=r0 / (1 - r0) * (l0 + l1),
        log_likelihood=float(ll[0]),
        converged=True,
        iterations=int(sol.iterations[0]),
        final_score_norm=float(sol.score_norm[0]),
        boundary=tuple(nm for nm, z in zip(PARAM_NAMES[:2], sol.zero_mask[0]) if z),
    )
