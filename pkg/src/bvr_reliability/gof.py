"""Rayleigh marginal fitting and the one-sample Kolmogorov-Smirnov test.

p-values come from the limiting Kolmogorov distribution with no correction
for the estimated rate, so they are conservative when theta is fitted from
the same data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import RayleighParams, rayleigh_cdf


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    n: int
    theta_hat: RayleighParams
    note: str = "asymptotic Kolmogorov p-value; no estimated-parameter correction"


def fit_rayleigh(xs) -> RayleighParams:
    """Closed-form MLE of the Rayleigh rate, n / sum(x^2)."""
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise ValueError("need at least one observation")
    if np.any(xs <= 0) or not np.all(np.isfinite(xs)):
        raise ValueError("observations must be finite and positive")
    return RayleighParams(xs.size / float(np.sum(xs**2)))


def kolmogorov_sf(t: float) -> float:
    """P(K > t) for the limiting Kolmogorov distribution.

    Uses the alternating series 2 sum (-1)^(k-1) exp(-2 k^2 t^2) for t >= 1
    and the Jacobi-transformed series for the CDF below that, where the
    alternating form converges slowly.
    """
    if t <= 0.04:
        # 1 - sf is below 1e-300 here
        return 1.0
    if t < 1.0:
        c = math.sqrt(2 * math.pi) / t
        s = sum(math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * t * t)) for k in range(1, 40))
        return min(1.0, max(0.0, 1.0 - c * s))
    s = 0.0
    for k in range(1, 101):
        term = math.exp(-2 * k * k * t * t)
        s += term if k % 2 else -term
        if term < 1e-300:
            break
    return min(1.0, max(0.0, 2 * s))


def ks_statistic(xs, cdf) -> float:
    """Two-sided sup distance between the empirical CDF and ``cdf``."""
    xs = np.sort(np.asarray(xs, dtype=float))
    n = xs.size
    f = cdf(xs)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - f)
    d_minus = np.max(f - (i - 1) / n)
    return float(max(d_plus, d_minus))


def ks_test(xs, theta: RayleighParams | None = None) -> KsResult:
    """KS test of ``xs`` against RA(theta); theta is fitted when omitted."""
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise ValueError("need at least one observation")
    theta = theta or fit_rayleigh(xs)
    d = ks_statistic(xs, lambda v: rayleigh_cdf(theta, v))
    return KsResult(d, kolmogorov_sf(math.sqrt(xs.size) * d), int(xs.size), theta)
