"""Rayleigh and bivariate Rayleigh (BVR) distributions.

A BVR(l0, l1, l2) pair is built from three independent Rayleigh variables
U0 ~ RA(l0), U1 ~ RA(l1), U2 ~ RA(l2) as X = min(U0, U1), Y = min(U0, U2).
The shared shock U0 puts positive mass on the diagonal X = Y.

Rayleigh RA(theta) here has density 2*theta*x*exp(-theta*x**2), so theta is a
rate on squared time, not the textbook sigma scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np


@dataclass(frozen=True)
class RayleighParams:
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and self.theta > 0):
            raise ValueError(f"Rayleigh rate must be positive, got {self.theta}")


@dataclass(frozen=True)
class BvrParams:
    """Rate triple of a BVR distribution.

    ``lambda0 == 0`` is the independence case and is allowed here; the
    likelihood code decides separately whether a zero rate is admissible
    for a given sample.
    """

    lambda0: float
    lambda1: float
    lambda2: float

    def __post_init__(self):
        for name in ("lambda0", "lambda1", "lambda2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")
        if self.total <= 0:
            raise ValueError("at least one rate must be positive")

    @property
    def total(self) -> float:
        return self.lambda0 + self.lambda1 + self.lambda2

    def as_array(self) -> np.ndarray:
        return np.array([self.lambda0, self.lambda1, self.lambda2], dtype=float)

    @classmethod
    def from_array(cls, values) -> "BvrParams":
        l0, l1, l2 = (float(v) for v in values)
        return cls(l0, l1, l2)

    @classmethod
    def from_reliability(cls, r: float, lambda0: float, lambda1: float) -> "BvrParams":
        """Parameters with given (lambda0, lambda1) and reliability ``r``."""
        if not 0 < r < 1:
            raise ValueError(f"reliability must lie in (0, 1), got {r}")
        return cls(lambda0, lambda1, r / (1 - r) * (lambda0 + lambda1))


class PairedObservation(NamedTuple):
    x: float
    y: float


class PairedSample:
    """Immutable paired sample of strictly positive (x, y) observations.

    ``x`` is the strength and ``y`` the stress; the arrays are read-only.
    """

    __slots__ = ("_x", "_y")

    def __init__(self, x, y):
        x = np.array(x, dtype=float).ravel()
        y = np.array(y, dtype=float).ravel()
        if x.shape != y.shape:
            raise ValueError(f"x and y lengths differ: {x.size} != {y.size}")
        if x.size == 0:
            raise ValueError("sample must contain at least one observation")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("observations must be finite")
        if np.any(x <= 0) or np.any(y <= 0):
            raise ValueError("observations must be strictly positive")
        x.flags.writeable = False
        y.flags.writeable = False
        self._x = x
        self._y = y

    @classmethod
    def from_pairs(cls, pairs) -> "PairedSample":
        arr = np.asarray(list(pairs), dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("pairs must be a sequence of (x, y) tuples")
        return cls(arr[:, 0], arr[:, 1])

    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def y(self) -> np.ndarray:
        return self._y

    @property
    def n(self) -> int:
        return int(self._x.size)

    @property
    def observations(self) -> list[PairedObservation]:
        return list(self)

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[PairedObservation]:
        for a, b in zip(self._x, self._y):
            yield PairedObservation(float(a), float(b))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PairedSample):
            return NotImplemented
        return np.array_equal(self._x, other._x) and np.array_equal(self._y, other._y)

    def __hash__(self):
        return hash((self._x.tobytes(), self._y.tobytes()))

    def __repr__(self) -> str:
        return f"PairedSample(n={self.n})"

    def swapped(self) -> "PairedSample":
        """Exchange strength and stress columns."""
        return PairedSample(self._y, self._x)

    def scaled(self, c: float) -> "PairedSample":
        return PairedSample(c * self._x, c * self._y)


@dataclass(frozen=True)
class ClassProbabilities:
    p_tie: float
    p_x_lt_y: float
    p_y_lt_x: float


def reliability(params: BvrParams) -> float:
    """R = P(Y < X) = lambda2 / (lambda0 + lambda1 + lambda2)."""
    return params.lambda2 / params.total


def reliability_gradient(params: BvrParams) -> np.ndarray:
    """Partial derivatives of R with respect to (lambda0, lambda1, lambda2)."""
    s = params.total
    l2 = params.lambda2
    return np.array([-l2 / s**2, -l2 / s**2, (params.lambda0 + params.lambda1) / s**2])


def _check_time(name, v):
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError(f"{name} must be nonnegative")
    return v


def joint_survival(params: BvrParams, x, y):
    """P(X > x, Y > y). Accepts scalars or broadcastable arrays."""
    x = _check_time("x", x)
    y = _check_time("y", y)
    m = np.maximum(x, y)
    out = np.exp(-params.lambda1 * x**2 - params.lambda2 * y**2 - params.lambda0 * m**2)
    return float(out) if out.ndim == 0 else out


def min_survival(params: BvrParams, t):
    """P(min(X, Y) > t); min(X, Y) is RA(lambda0 + lambda1 + lambda2)."""
    t = _check_time("t", t)
    out = np.exp(-params.total * t**2)
    return float(out) if out.ndim == 0 else out


def class_probabilities(params: BvrParams) -> ClassProbabilities:
    """Probabilities of X = Y, X < Y and Y < X.

    The tie probability is the chance that U0 is the smallest of the three
    shocks, and likewise for the other two classes.
    """
    s = params.total
    return ClassProbabilities(
        p_tie=params.lambda0 / s,
        p_x_lt_y=params.lambda1 / s,
        p_y_lt_x=params.lambda2 / s,
    )


def rayleigh_cdf(theta: RayleighParams, x):
    x = _check_time("x", x)
    out = -np.expm1(-theta.theta * x**2)
    return float(out) if out.ndim == 0 else out


def rayleigh_survival(theta: RayleighParams, x):
    x = _check_time("x", x)
    out = np.exp(-theta.theta * x**2)
    return float(out) if out.ndim == 0 else out


def rayleigh_quantile(theta: RayleighParams, p):
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p >= 1)) or np.any(np.isnan(p)):
        raise ValueError("probability must lie in [0, 1)")
    out = np.sqrt(-np.log1p(-p) / theta.theta)
    return float(out) if out.ndim == 0 else out


def rayleigh_sample(theta: RayleighParams, size, rng: np.random.Generator) -> np.ndarray:
    return rayleigh_quantile(theta, rng.random(size))


def _shock_times(rate: float, u: np.ndarray) -> np.ndarray:
    # rate 0 means the shock never arrives
    if rate == 0:
        return np.full(u.shape, np.inf)
    return np.sqrt(-np.log1p(-u) / rate)


def sample_bvr_arrays(params: BvrParams, n: int, rng: np.random.Generator,
                      size: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Draw raw (x, y) arrays of shape (n,) or (size, n).

    One (..., n, 3) block of uniforms is consumed per call, so the stream
    position after a call depends only on the requested shape.
    """
    if n < 1:
        raise ValueError(f"sample size must be at least 1, got {n}")
    shape = (n, 3) if size is None else (size, n, 3)
    u = rng.random(shape)
    u0 = _shock_times(params.lambda0, u[..., 0])
    u1 = _shock_times(params.lambda1, u[..., 1])
    u2 = _shock_times(params.lambda2, u[..., 2])
    # minimum returns u0 itself when it wins, so ties are bit-exact
    return np.minimum(u0, u1), np.minimum(u0, u2)


def sample_bvr(params: BvrParams, n: int, rng: np.random.Generator) -> PairedSample:
    """Draw ``n`` iid BVR pairs by inverse-CDF sampling of the three shocks."""
    x, y = sample_bvr_arrays(params, n, rng)
    return PairedSample(x, y)
