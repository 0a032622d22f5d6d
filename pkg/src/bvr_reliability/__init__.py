"""Inference on the stress-strength reliability R = P(Y < X) under the
bivariate Rayleigh model built from three independent Rayleigh shocks."""

from .dataio import (
    ColumnCountError,
    DataError,
    Dataset,
    EmptyFileError,
    MalformedRowError,
    load_csv,
    parse_csv,
    read_report,
    render_report,
    save_csv,
    uefa_dataset,
    write_report,
)
from .estimation import (
    DEFAULT_OPTIONS,
    SIMULATION_OPTIONS,
    BoundaryFitError,
    ClassCounts,
    ConvergenceError,
    FitError,
    FitResult,
    InformationMatrix,
    RestrictedFit,
    SolverOptions,
    classify,
    delta_variance,
    expected_class_counts,
    fisher_information,
    fit_mle,
    log_likelihood,
    natural_estimate,
    restricted_fit,
    restricted_log_likelihood,
    restricted_score,
    score,
)
from .gof import KsResult, fit_rayleigh, kolmogorov_sf, ks_statistic, ks_test
from .inference import (
    IntervalEstimate,
    MonteCarloConfig,
    TestResult,
    asymptotic_ci,
    asymptotic_test,
    bootstrap_ci,
    cat_interval,
    cat_test,
)
from .model import (
    BvrParams,
    PairedSample,
    RayleighParams,
    class_probabilities,
    joint_survival,
    rayleigh_cdf,
    rayleigh_quantile,
    rayleigh_sample,
    reliability,
    sample_bvr,
)
from .simulation import StudyConfig, StudyReport, preset, run_bias_mse, run_coverage, run_power

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
