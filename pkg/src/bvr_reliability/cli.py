"""Command-line front end.

Exit status: 0 on success, 2 on usage errors, 1 on data, I/O or fitting
failures. Every failure prints exactly one line ``error: <kind>: <message>``
to stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import _rng
from .dataio import DataError, Dataset, dataset_to_csv, load_csv, render_report, uefa_dataset
from .dataio import _atomic_write
from .estimation import FitError, SolverOptions, fit_mle, natural_estimate
from .gof import ks_test
from .inference import (
    ALTERNATIVES,
    MonteCarloConfig,
    asymptotic_ci,
    asymptotic_test,
    bootstrap_ci,
    cat_interval,
    cat_test,
)
from .model import BvrParams, PairedSample, sample_bvr_arrays
from .simulation import METHODS, TABLE3_R, preset, run_bias_mse, run_coverage, run_power

PROG = "bvr-reliability"
EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fail(kind: str, message: str, code: int) -> int:
    text = " ".join(str(message).split())
    print(f"error: {kind}: {text}", file=sys.stderr)
    return code


# -- argument types --------------------------------------------------------------

def _alpha(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid alpha {text!r}") from None
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {text}")
    return v


_unit = _alpha


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return v


def _list_of(conv):
    def parse(text):
        items = [t for t in text.split(",") if t.strip()]
        if not items:
            raise argparse.ArgumentTypeError("empty list")
        return tuple(conv(t.strip()) for t in items)
    return parse


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("seed must be nonnegative")
    return v


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--seed", type=_seed, default=None,
                   help="root seed (default: $BVR_SEED, else 0)")
    g.add_argument("--alpha", type=_alpha, default=0.05, help="significance level (default 0.05)")
    g.add_argument("--format", choices=("json", "csv"), default="json")
    g.add_argument("--out", default=None, help="output file (default: stdout)")
    g.add_argument("--workers", type=_positive_int, default=1)
    g.add_argument("--full-precision", action="store_true",
                   help="write floats with full precision instead of 6 significant digits")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    data = _Parser(add_help=False)
    d = data.add_argument_group("input options")
    d.add_argument("--input", required=True, help="CSV path or the literal 'uefa'")
    hdr = d.add_mutually_exclusive_group()
    hdr.add_argument("--header", dest="header", action="store_const", const=True, default=None,
                     help="first row is a header (default: auto-detect)")
    hdr.add_argument("--no-header", dest="header", action="store_const", const=False)
    d.add_argument("--swap", action="store_true", help="exchange the strength and stress columns")
    d.add_argument("--tie-tolerance", type=_nonneg_float, default=0.0,
                   help="|x - y| at or below this counts as a tie")

    parser = _Parser(prog=PROG, description="Inference on R = P(Y < X) for bivariate Rayleigh data.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("fit", parents=[common, data], help="maximum likelihood fit")

    p = sub.add_parser("interval", parents=[common, data], help="confidence interval for R")
    p.add_argument("--method", choices=METHODS, default="asymptotic")
    p.add_argument("--nboot", type=_positive_int, default=1000)
    p.add_argument("--cat-replicates", type=_positive_int, default=1000)
    p.add_argument("--degree", type=int, choices=(1, 2, 3), default=2)

    p = sub.add_parser("test", parents=[common, data], help="test of H0: R = r0")
    p.add_argument("--method", choices=("asymptotic", "cat"), default="asymptotic")
    p.add_argument("--r0", type=_unit, required=True)
    p.add_argument("--alternative", choices=ALTERNATIVES, default="greater")
    p.add_argument("--cat-replicates", type=_positive_int, default=1000)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo study presets")
    p.add_argument("preset", choices=("table1", "table2", "table3"))
    p.add_argument("--reps", type=_positive_int, default=None, help="replications per cell")
    p.add_argument("--n-list", type=_list_of(_positive_int), default=None)
    p.add_argument("--lambda0-list", type=_list_of(_positive_float), default=None)
    p.add_argument("--lambda1", type=_positive_float, default=None)
    p.add_argument("--lambda2", type=_positive_float, default=None)
    p.add_argument("--methods", type=_list_of(str), default=None)
    p.add_argument("--nboot", type=_positive_int, default=None)
    p.add_argument("--cat-replicates", type=_positive_int, default=None)
    p.add_argument("--r0", type=_unit, default=0.5, help="null value for table3 (default 0.5)")
    p.add_argument("--r-list", type=_list_of(_unit), default=TABLE3_R,
                   help="true R values for table3")

    sub.add_parser("gof", parents=[common, data], help="Rayleigh KS checks of both margins")

    p = sub.add_parser("sample", parents=[common], help="draw a BVR sample")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--lambda0", type=_nonneg_float, required=True)
    p.add_argument("--lambda1", type=_nonneg_float, required=True)
    p.add_argument("--lambda2", type=_nonneg_float, required=True)

    sub.add_parser("uefa", parents=[common], help="export the embedded UEFA dataset")
    return parser


# -- commands --------------------------------------------------------------------

def _dataset(args) -> Dataset:
    ds = uefa_dataset() if args.input == "uefa" else load_csv(args.input, args.header)
    return ds.swapped() if args.swap else ds


def _options(args) -> SolverOptions:
    return SolverOptions(tie_tolerance=args.tie_tolerance)


def _cmd_fit(args):
    ds = _dataset(args)
    fit = fit_mle(ds.pairs, _options(args))
    return fit


def _cmd_interval(args):
    ds = _dataset(args)
    opts = _options(args)
    fit = fit_mle(ds.pairs, opts)
    if args.method == "asymptotic":
        return asymptotic_ci(fit, args.alpha)
    if args.method == "bootstrap":
        cfg = MonteCarloConfig(args.nboot, args.seed, args.workers)
        return bootstrap_ci(ds.pairs, args.alpha, cfg, opts, fit)
    cfg = MonteCarloConfig(args.cat_replicates, args.seed, args.workers)
    return cat_interval(ds.pairs, args.alpha, cfg=cfg, degree=args.degree, options=opts, fit=fit)


def _cmd_test(args):
    ds = _dataset(args)
    opts = _options(args)
    fit = fit_mle(ds.pairs, opts)
    if args.method == "asymptotic":
        return asymptotic_test(fit, args.r0, args.alternative, args.alpha)
    cfg = MonteCarloConfig(args.cat_replicates, args.seed, args.workers)
    return cat_test(ds.pairs, args.r0, args.alternative, args.alpha, cfg, opts, fit)


def _cmd_simulate(args):
    cfg = preset(args.preset, replications=args.reps, sample_sizes=args.n_list,
                 lambda0_values=args.lambda0_list, lambda1=args.lambda1, lambda2=args.lambda2,
                 methods=args.methods, nboot=args.nboot, cat_replicates=args.cat_replicates,
                 alpha=args.alpha, seed=args.seed, workers=args.workers)
    if args.preset == "table1":
        report = run_bias_mse(cfg)
    elif args.preset == "table2":
        report = run_coverage(cfg)
    else:
        report = run_power(cfg, args.r0, args.r_list)
    # wall-clock time would break byte-identical output, so it only goes to the log
    logging.getLogger(__name__).info("runtime %.1f s", report.metadata.pop("runtime_s", 0.0))
    return report


def _cmd_gof(args):
    ds = _dataset(args)
    out = {"kind": "gof", "label": ds.label}
    for name, col in zip(ds.column_names, (ds.pairs.x, ds.pairs.y)):
        res = ks_test(col)
        out[name] = {"statistic": res.statistic, "p_value": res.p_value, "n": res.n,
                     "theta_hat": res.theta_hat.theta, "note": res.note}
    return out


def _cmd_sample(args):
    params = BvrParams(args.lambda0, args.lambda1, args.lambda2)
    x, y = sample_bvr_arrays(params, args.n, _rng.substream(args.seed, _rng.SAMPLE))
    ds = Dataset("sample", PairedSample(x, y), ("x", "y"),
                 f"BVR({args.lambda0:g}, {args.lambda1:g}, {args.lambda2:g}) seed {args.seed}")
    return ds


def _cmd_uefa(args):
    return uefa_dataset()


def _render(obj, args) -> str:
    if isinstance(obj, Dataset):
        if args.format == "csv":
            return dataset_to_csv(obj, args.full_precision)
        return render_report({
            "kind": "dataset", "label": obj.label, "columns": list(obj.column_names),
            "provenance": obj.provenance, "n": obj.n,
            "natural_estimate": natural_estimate(obj.pairs),
            "x": obj.pairs.x, "y": obj.pairs.y,
        }, "json", args.full_precision)
    return render_report(obj, args.format, args.full_precision)


COMMANDS = {
    "fit": _cmd_fit,
    "interval": _cmd_interval,
    "test": _cmd_test,
    "simulate": _cmd_simulate,
    "gof": _cmd_gof,
    "sample": _cmd_sample,
    "uefa": _cmd_uefa,
}


def _resolve_seed(args):
    if args.seed is not None:
        return
    env = os.environ.get("BVR_SEED")
    if env is None or env.strip() == "":
        args.seed = 0
        return
    try:
        args.seed = _seed(env.strip())
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"BVR_SEED: {exc}") from None


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _resolve_seed(args)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        text = _render(COMMANDS[args.command](args), args)
        if args.out:
            _atomic_write(args.out, text)
        else:
            sys.stdout.write(text)
    except DataError as exc:
        return _fail("data", exc, EXIT_RUNTIME)
    except FitError as exc:
        return _fail("fit", exc, EXIT_RUNTIME)
    except np.linalg.LinAlgError as exc:
        return _fail("fit", exc, EXIT_RUNTIME)
    except OSError as exc:
        return _fail("io", exc, EXIT_RUNTIME)
    except ValueError as exc:
        return _fail("value", exc, EXIT_RUNTIME)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
