"""Monte Carlo studies: bias/MSE of R-hat, interval coverage, and test power.

Every cell (n, lambda0) or (n, R) gets a seed derived from the root seed and
the cell's own values, so a cell run on its own reproduces the matching row
of a full study. Trials within a cell use per-trial sub-streams, so worker
count never changes the numbers.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _rng
from .estimation import FitError, SolverOptions, fit_mle
from .inference import (
    MonteCarloConfig,
    bootstrap_ci,
    cat_interval,
    cat_test,
    asymptotic_ci,
    asymptotic_test,
    simulate_r_hats,
)
from .model import BvrParams, PairedSample, reliability, sample_bvr_arrays

log = logging.getLogger(__name__)

METHODS = ("asymptotic", "bootstrap", "cat")
FLAG_RATE = 0.10

TABLE1_N = (5, 10, 15, 20, 25, 50)
TABLE1_LAMBDA0 = (0.5, 1.0, 1.5, 2.0, 2.5)
TABLE3_N = (10, 15, 20, 25, 50)
TABLE3_R = (0.5, 0.534, 0.562, 0.6, 0.636, 0.666, 0.714, 0.777, 0.833, 0.882)

_KIND_BIAS, _KIND_COVERAGE, _KIND_POWER = 1, 2, 3


@dataclass(frozen=True)
class StudyConfig:
    sample_sizes: tuple[int, ...] = TABLE1_N
    lambda0_values: tuple[float, ...] = TABLE1_LAMBDA0
    lambda1: float = 1.0
    lambda2: float = 1.0
    replications: int = 1000
    alpha: float = 0.05
    seed: int = 0
    methods: tuple[str, ...] = METHODS
    nboot: int = 1000
    cat_replicates: int = 1000
    workers: int = 1
    # False counts samples lacking x<y or y<x pairs as failed trials
    allow_boundary: bool = True

    def __post_init__(self):
        if self.replications < 100:
            raise ValueError("replications must be at least 100")
        if self.lambda1 <= 0 or self.lambda2 <= 0 or any(v <= 0 for v in self.lambda0_values):
            raise ValueError("all rates must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        if any(n < 1 for n in self.sample_sizes):
            raise ValueError("sample sizes must be positive")


@dataclass
class StudyReport:
    kind: str
    rows: list[dict]
    metadata: dict = field(default_factory=dict)

    @property
    def csv_columns(self) -> list[str]:
        return {
            "bias_mse": ["n", "lambda0", "bias", "mse"],
            "coverage": ["n", "lambda0", "method", "length", "coverage"],
            "power": ["n", "true_r", "method", "power"],
        }[self.kind]

    def row(self, **match) -> dict:
        for r in self.rows:
            if all(_same(r.get(k), v) for k, v in match.items()):
                return r
        raise KeyError(match)


def _same(a, b):
    if isinstance(a, float) or isinstance(b, float):
        return a is not None and b is not None and math.isclose(a, b, rel_tol=0, abs_tol=1e-9)
    return a == b


def _code(v: float) -> int:
    return int(round(v * 1_000_000))


def cell_seed(root: int, kind: int, n: int, value: float) -> int:
    return _rng.derive_seed(root, _rng.STUDY, kind, n, _code(value))


def _options(cfg: StudyConfig) -> SolverOptions:
    return SolverOptions(allow_boundary=cfg.allow_boundary)


def _trial_sample(params, n, seed, t) -> PairedSample:
    x, y = sample_bvr_arrays(params, n, _rng.substream(seed, t))
    return PairedSample(x, y)


def _map(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
    return [fn(it) for it in items]


def _config_echo(cfg: StudyConfig) -> dict:
    d = asdict(cfg)
    d.pop("workers")
    return d


# -- bias and MSE ----------------------------------------------------------------

def bias_mse_cell(cfg: StudyConfig, n: int, lambda0: float) -> dict:
    params = BvrParams(lambda0, cfg.lambda1, cfg.lambda2)
    r_true = reliability(params)
    seed = cell_seed(cfg.seed, _KIND_BIAS, n, lambda0)
    r = simulate_r_hats(params, n, cfg.replications, seed, (), _options(cfg))
    ok = np.isfinite(r)
    r = r[ok]
    failures = int(np.sum(~ok))
    mean = float(np.mean(r))
    bias = mean - r_true
    mse = float(np.mean((r - r_true) ** 2))
    var = float(np.mean((r - mean) ** 2))
    return {
        "n": n, "lambda0": lambda0, "lambda1": cfg.lambda1, "lambda2": cfg.lambda2,
        "true_r": r_true, "mean": mean, "bias": bias, "mse": mse, "variance": var,
        "trials": int(r.size), "failures": failures,
        "flagged": failures > FLAG_RATE * cfg.replications,
    }


def run_bias_mse(cfg: StudyConfig) -> StudyReport:
    """Bias and MSE of R-hat for every (n, lambda0) cell."""
    t0 = time.perf_counter()
    rows = []
    for n in cfg.sample_sizes:
        for l0 in cfg.lambda0_values:
            rows.append(bias_mse_cell(cfg, n, l0))
            log.info("bias/mse n=%d lambda0=%g done", n, l0)
    return StudyReport("bias_mse", rows, {
        "config": _config_echo(cfg),
        "failures": sum(r["failures"] for r in rows),
        "runtime_s": time.perf_counter() - t0,
    })


# -- coverage --------------------------------------------------------------------

def _coverage_trial(args):
    params, n, seed, t, alpha, methods, nboot, cat_m, opts = args
    sample = _trial_sample(params, n, seed, t)
    r_true = reliability(params)
    out = {}
    try:
        fit = fit_mle(sample, opts)
    except FitError:
        return {m: None for m in methods}
    trial_seed = _rng.derive_seed(seed, t)
    for m in methods:
        try:
            if m == "asymptotic":
                ci = asymptotic_ci(fit, alpha)
            elif m == "bootstrap":
                ci = bootstrap_ci(sample, alpha, MonteCarloConfig(nboot, trial_seed), opts, fit)
            else:
                ci = cat_interval(sample, alpha, cfg=MonteCarloConfig(cat_m, trial_seed),
                                  options=opts, fit=fit)
        except (FitError, ValueError):
            out[m] = None
            continue
        out[m] = (ci.length, ci.contains(r_true))
    return out


def coverage_cell(cfg: StudyConfig, n: int, lambda0: float) -> list[dict]:
    params = BvrParams(lambda0, cfg.lambda1, cfg.lambda2)
    seed = cell_seed(cfg.seed, _KIND_COVERAGE, n, lambda0)
    jobs = [(params, n, seed, t, cfg.alpha, cfg.methods, cfg.nboot, cfg.cat_replicates,
             _options(cfg)) for t in range(cfg.replications)]
    results = _map(_coverage_trial, jobs, cfg.workers)
    rows = []
    for m in cfg.methods:
        got = [r[m] for r in results if r[m] is not None]
        failures = len(results) - len(got)
        lengths = np.array([g[0] for g in got])
        hits = np.array([g[1] for g in got], dtype=float)
        rows.append({
            "n": n, "lambda0": lambda0, "method": m,
            "length": float(lengths.mean()) if got else float("nan"),
            "coverage": float(hits.mean()) if got else float("nan"),
            "trials": len(got), "failures": failures,
            "flagged": failures > FLAG_RATE * cfg.replications,
        })
    return rows


def run_coverage(cfg: StudyConfig) -> StudyReport:
    """Average length and empirical coverage of each interval method."""
    t0 = time.perf_counter()
    rows = []
    for n in cfg.sample_sizes:
        for l0 in cfg.lambda0_values:
            rows.extend(coverage_cell(cfg, n, l0))
            log.info("coverage n=%d lambda0=%g done", n, l0)
    return StudyReport("coverage", rows, {
        "config": _config_echo(cfg),
        "failures": {m: sum(r["failures"] for r in rows if r["method"] == m) for m in cfg.methods},
        "runtime_s": time.perf_counter() - t0,
    })


# -- power -----------------------------------------------------------------------

def _power_trial(args):
    params, n, seed, t, r0, alpha, methods, cat_m, opts = args
    sample = _trial_sample(params, n, seed, t)
    out = {}
    try:
        fit = fit_mle(sample, opts)
    except FitError:
        return {m: None for m in methods}
    for m in methods:
        try:
            if m == "asymptotic":
                res = asymptotic_test(fit, r0, "greater", alpha)
            else:
                res = cat_test(sample, r0, "greater", alpha,
                               MonteCarloConfig(cat_m, _rng.derive_seed(seed, t)),
                               opts, fit)
        except (FitError, ValueError):
            out[m] = None
            continue
        out[m] = res.reject
    return out


def power_cell(cfg: StudyConfig, n: int, true_r: float, r0: float) -> list[dict]:
    lambda0 = cfg.lambda0_values[0]
    params = BvrParams.from_reliability(true_r, lambda0, cfg.lambda1)
    seed = cell_seed(cfg.seed, _KIND_POWER, n, true_r)
    methods = tuple(m for m in ("cat", "asymptotic") if m in cfg.methods)
    jobs = [(params, n, seed, t, r0, cfg.alpha, methods, cfg.cat_replicates, _options(cfg))
            for t in range(cfg.replications)]
    results = _map(_power_trial, jobs, cfg.workers)
    rows = []
    for m in methods:
        got = [r[m] for r in results if r[m] is not None]
        failures = len(results) - len(got)
        rows.append({
            "n": n, "true_r": true_r, "method": m,
            "power": float(np.mean(got)) if got else float("nan"),
            "lambda0": lambda0, "lambda1": cfg.lambda1, "lambda2": params.lambda2,
            "r0": r0, "trials": len(got), "failures": failures,
            "flagged": failures > FLAG_RATE * cfg.replications,
        })
    return rows


def run_power(cfg: StudyConfig, r0: float = 0.5, true_r_values=TABLE3_R) -> StudyReport:
    """Rejection rates of the CAT and asymptotic tests of R = r0 vs R > r0.

    The alternative is reached by holding lambda0 (first entry of
    ``cfg.lambda0_values``) and lambda1 fixed and solving for lambda2.
    """
    if not 0 < r0 < 1 or any(not 0 < r < 1 for r in true_r_values):
        raise ValueError("r0 and true R values must lie in (0, 1)")
    t0 = time.perf_counter()
    rows = []
    for n in cfg.sample_sizes:
        for r in true_r_values:
            rows.extend(power_cell(cfg, n, r, r0))
            log.info("power n=%d R=%g done", n, r)
    return StudyReport("power", rows, {
        "config": _config_echo(cfg),
        "r0": r0,
        "alternative": "greater",
        "parameterization": "lambda0, lambda1 fixed; lambda2 = R (lambda0 + lambda1) / (1 - R)",
        "runtime_s": time.perf_counter() - t0,
    })


# -- presets ---------------------------------------------------------------------

def preset(name: str, **overrides) -> StudyConfig:
    """Named study designs (table1: bias/MSE, table2: coverage, table3: power); any field can be overridden."""
    base = {
        "table1": dict(sample_sizes=TABLE1_N, lambda0_values=TABLE1_LAMBDA0),
        "table2": dict(sample_sizes=TABLE1_N, lambda0_values=TABLE1_LAMBDA0),
        "table3": dict(sample_sizes=TABLE3_N, lambda0_values=(1.0,), methods=("asymptotic", "cat")),
    }
    if name not in base:
        raise ValueError(f"unknown preset {name!r}")
    kw = base[name]
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return StudyConfig(**kw)
