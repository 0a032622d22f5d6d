"""Datasets, CSV ingestion and report serialization."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, fields, is_dataclass

import numpy as np

from .model import BvrParams, PairedSample

SCHEMA_VERSION = 1


class DataError(ValueError):
    """Base class for dataset problems."""


class EmptyFileError(DataError):
    pass


class ColumnCountError(DataError):
    pass


class MalformedRowError(DataError):
    pass


@dataclass(frozen=True)
class Dataset:
    label: str
    pairs: PairedSample
    column_names: tuple[str, str] = ("x", "y")
    provenance: str = ""

    @property
    def n(self) -> int:
        return self.pairs.n

    def swapped(self) -> "Dataset":
        return Dataset(self.label, self.pairs.swapped(),
                       (self.column_names[1], self.column_names[0]),
                       self.provenance)


# Group stage matches with a home goal and a direct-kick goal.
# X1: minute of the first kick goal by either team; X2: minute of the first
# goal of any kind by the home team.
_UEFA_2005_06 = [
    ("Lyon-Real Madrid", 26, 20),
    ("Milan-Fenerbahce", 63, 18),
    ("Chelsea-Anderlecht", 19, 19),
    ("Club Brugge-Juventus", 66, 85),
    ("Fenerbahce-PSV", 40, 40),
    ("Internazionale-Rangers", 49, 49),
    ("Panathinaikos-Bremen", 8, 8),
    ("Ajax-Arsenal", 69, 71),
    ("Man. United-Benfica", 39, 39),
    ("Real Madrid-Rosenborg", 82, 48),
    ("Villarreal-Benfica", 72, 72),
    ("Juventus-Bayern", 66, 62),
    ("Club Brugge-Rapid", 25, 9),
    ("Olympiacos-Lyon", 41, 3),
    ("Internazionale-Porto", 16, 75),
    ("Schalke-PSV", 18, 18),
    ("Barcelona-Bremen", 22, 14),
    ("Milan-Schalke", 42, 42),
    ("Rapid-Juventus", 36, 52),
]
_UEFA_2004_05 = [
    ("Internazionale-Bremen", 34, 34),
    ("Real Madrid-Roma", 53, 39),
    ("Man. United-Fenerbahce", 54, 7),
    ("Bayern-Ajax", 51, 28),
    ("Moscow-PSG", 76, 64),
    ("Barcelona-Shakhtar", 64, 15),
    ("Leverkusen-Roma", 26, 48),
    ("Arsenal-Panathinaikos", 16, 16),
    ("Dynamo Kyiv-Real Madrid", 44, 13),
    ("Man. United-Sparta", 25, 14),
    ("Bayern-M. Tel-Aviv", 55, 11),
    ("Bremen-Internazionale", 49, 49),
    ("Anderlecht-Valencia", 24, 24),
    ("Panathinaikos-PSV", 44, 30),
    ("Arsenal-Rosenborg", 42, 3),
    ("Liverpool-Olympiacos", 27, 47),
    ("M. Tel-Aviv-Juventus", 28, 28),
    ("Bremen-Panathinaikos", 2, 2),
]
UEFA_MATCHES = tuple(_UEFA_2005_06 + _UEFA_2004_05)


def uefa_dataset() -> Dataset:
    """The 37 UEFA Champions League matches (2005-06 first, then 2004-05).

    Strength X is X1 (first kick goal), stress Y is X2 (first home goal),
    both in minutes.
    """
    x = [m[1] for m in UEFA_MATCHES]
    y = [m[2] for m in UEFA_MATCHES]
    return Dataset(
        label="uefa",
        pairs=PairedSample(x, y),
        column_names=("X1", "X2"),
        provenance="UEFA Champions League group stage 2004-05 and 2005-06 (Meintanis, 2007)",
    )


# -- CSV ingestion ------------------------------------------------------------

def _parse_number(token, line_no):
    try:
        v = float(token)
    except ValueError:
        raise MalformedRowError(f"row {line_no}: non-numeric value {token.strip()!r}") from None
    if not math.isfinite(v) or v <= 0:
        raise MalformedRowError(f"row {line_no}: value {token.strip()!r} is not strictly positive")
    return v


def parse_csv(text: str, header: bool | None = None, label: str = "data") -> Dataset:
    """Parse two comma-separated numeric columns.

    Lines starting with ``#`` may carry ``# label: ...`` and
    ``# provenance: ...`` metadata. ``header=None`` detects a header from a
    non-numeric first row. Row numbers in errors are 1-based file lines.
    """
    meta = {}
    rows = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, sep, value = stripped[1:].partition(":")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        rows.append((line_no, next(csv.reader([stripped]))))
    if not rows:
        raise EmptyFileError("no data rows")

    names = ("x", "y")
    if header is None:
        first = rows[0][1]
        try:
            [float(t) for t in first]
            header = False
        except ValueError:
            header = True
    if header:
        line_no, cells = rows.pop(0)
        if len(cells) != 2:
            raise ColumnCountError(f"row {line_no}: expected 2 columns, found {len(cells)}")
        names = (cells[0].strip(), cells[1].strip())
        if not rows:
            raise EmptyFileError("header but no data rows")

    xs, ys = [], []
    for line_no, cells in rows:
        if len(cells) != 2:
            raise ColumnCountError(f"row {line_no}: expected 2 columns, found {len(cells)}")
        xs.append(_parse_number(cells[0], line_no))
        ys.append(_parse_number(cells[1], line_no))
    return Dataset(meta.get("label", label), PairedSample(xs, ys), names, meta.get("provenance", ""))


def load_csv(path, header: bool | None = None, label: str | None = None) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_csv(text, header, label or os.path.splitext(os.path.basename(str(path)))[0])


def dataset_to_csv(ds: Dataset, full_precision: bool = True) -> str:
    fmt = repr if full_precision else (lambda v: f"{v:.6g}")
    out = io.StringIO()
    out.write(f"# label: {ds.label}\n")
    if ds.provenance:
        out.write(f"# provenance: {ds.provenance}\n")
    out.write(f"{ds.column_names[0]},{ds.column_names[1]}\n")
    for a, b in ds.pairs:
        out.write(f"{fmt(float(a))},{fmt(float(b))}\n")
    return out.getvalue()


def save_csv(ds: Dataset, path, full_precision: bool = True) -> None:
    _atomic_write(path, dataset_to_csv(ds, full_precision))


# -- reports -------------------------------------------------------------------

def _round(v, full_precision):
    if full_precision or not math.isfinite(v):
        return v
    return float(f"{v:.6g}")


def to_jsonable(obj, full_precision: bool = False):
    """Recursively convert reports into JSON-ready structures."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return _round(v, full_precision)
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist(), full_precision)
    if isinstance(obj, BvrParams):
        return {"lambda0": to_jsonable(obj.lambda0, full_precision),
                "lambda1": to_jsonable(obj.lambda1, full_precision),
                "lambda2": to_jsonable(obj.lambda2, full_precision)}
    if isinstance(obj, PairedSample):
        return {"x": to_jsonable(obj.x, full_precision), "y": to_jsonable(obj.y, full_precision)}
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name), full_precision) for f in fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v, full_precision) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v, full_precision) for v in obj]
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def report_kind(report) -> str:
    from .estimation import FitResult
    from .inference import IntervalEstimate, TestResult
    from .simulation import StudyReport

    if isinstance(report, StudyReport):
        return f"study_{report.kind}"
    if isinstance(report, FitResult):
        return "fit"
    if isinstance(report, IntervalEstimate):
        return "interval"
    if isinstance(report, TestResult):
        return "test"
    if isinstance(report, dict):
        return str(report.get("kind", "analysis"))
    raise TypeError(f"unsupported report type {type(report).__name__}")


def render_json(report, full_precision: bool = False) -> str:
    payload = to_jsonable(report, full_precision)
    envelope = {"schema_version": SCHEMA_VERSION, "kind": report_kind(report), "payload": payload}
    return json.dumps(envelope, indent=2) + "\n"


def _flatten(prefix, obj, out):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, list) and any(isinstance(v, (dict, list)) for v in obj):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, out)
    else:
        out.append((prefix, obj))


def _csv_cell(v):
    if isinstance(v, list):
        return " ".join(str(t) for t in v)
    if v is None:
        return "nan"
    return str(v)


def render_csv(report, full_precision: bool = False) -> str:
    from .simulation import StudyReport

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    if isinstance(report, StudyReport):
        cols = report.csv_columns
        writer.writerow(cols)
        for row in report.rows:
            writer.writerow([_csv_cell(to_jsonable(row[c], full_precision)) for c in cols])
        return out.getvalue()
    items = []
    _flatten("", to_jsonable(report, full_precision), items)
    writer.writerow(["field", "value"])
    for k, v in items:
        writer.writerow([k, _csv_cell(v)])
    return out.getvalue()


def render_report(report, fmt: str = "json", full_precision: bool = False) -> str:
    if fmt == "json":
        return render_json(report, full_precision)
    if fmt == "csv":
        return render_csv(report, full_precision)
    raise ValueError(f"unknown format {fmt!r}")


def _atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_report(report, fmt: str, path, full_precision: bool = False) -> None:
    """Serialize a report to ``path`` atomically (no partial file on failure)."""
    _atomic_write(path, render_report(report, fmt, full_precision))


def fit_from_payload(payload: dict):
    """Rebuild a FitResult from its JSON payload."""
    from .estimation import ClassCounts, DeltaVariance, FitResult, InformationMatrix

    info = payload["info"]
    delta = payload.get("delta")
    counts = payload["counts"]
    return FitResult(
        params=BvrParams(**payload["params"]),
        r_hat=payload["r_hat"],
        counts=ClassCounts(counts["n0"], counts["n1"], counts["n2"], tuple(counts["tied_indices"])),
        info=InformationMatrix(np.array(info["entries"], dtype=float), info["n"],
                               tuple(info["free"])),
        delta=None if delta is None else DeltaVariance(
            np.array(delta["gradient"], dtype=float),
            np.array(delta["covariance"], dtype=float),
            delta["sigma"]),
        log_likelihood=payload["log_likelihood"],
        converged=payload["converged"],
        iterations=payload["iterations"],
        final_score_norm=payload["final_score_norm"],
        boundary=tuple(payload["boundary"]),
        diagnostics=payload["diagnostics"],
    )


def read_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        envelope = json.load(fh)
    if envelope.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported schema version {envelope.get('schema_version')}")
    return envelope
