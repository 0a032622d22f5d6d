import hashlib
import json
import os

import numpy as np
import pytest

from bvr_reliability.dataio import (
    ColumnCountError,
    EmptyFileError,
    MalformedRowError,
    UEFA_MATCHES,
    dataset_to_csv,
    fit_from_payload,
    load_csv,
    parse_csv,
    read_report,
    render_report,
    save_csv,
    write_report,
)
from bvr_reliability.inference import asymptotic_ci, asymptotic_test
from bvr_reliability.simulation import StudyConfig, run_bias_mse


class TestUefa:
    def test_size_and_first_row(self, uefa):
        assert uefa.n == 37
        assert tuple(uefa.pairs)[0] == (26.0, 20.0)
        assert uefa.column_names == ("X1", "X2")

    def test_seasons(self):
        assert UEFA_MATCHES[0][0] == "Lyon-Real Madrid"
        assert UEFA_MATCHES[19][0] == "Internazionale-Bremen"

    def test_checksum(self, uefa):
        text = ";".join(f"{int(a)},{int(b)}" for a, b in uefa.pairs)
        assert hashlib.sha256(text.encode()).hexdigest() == PINNED

    def test_immutable(self, uefa):
        with pytest.raises(ValueError):
            uefa.pairs.x[0] = 1.0


PINNED = "288dc8802812105cd75e0d01b592e5c0fffb0f17646e35ecd8ff94112ef91477"


class TestCsv:
    def test_two_rows(self):
        assert parse_csv("26,20\n63,18").n == 2

    def test_header_detected(self):
        ds = parse_csv("strength,stress\n1,2\n3,4\n")
        assert ds.column_names == ("strength", "stress")
        assert ds.n == 2

    def test_non_numeric(self):
        with pytest.raises(MalformedRowError, match="row 1"):
            parse_csv("26,abc\n", header=False)

    def test_nonpositive(self):
        with pytest.raises(MalformedRowError, match="row 2"):
            parse_csv("1,2\n0,3\n")

    def test_column_count(self):
        with pytest.raises(ColumnCountError, match="row 2"):
            parse_csv("1,2\n1,2,3\n")

    def test_empty(self):
        with pytest.raises(EmptyFileError):
            parse_csv("\n# only comments\n")

    def test_round_trip(self, uefa, tmp_path):
        path = tmp_path / "uefa.csv"
        save_csv(uefa, path)
        back = load_csv(path)
        assert back == uefa

    def test_round_trip_full_precision(self, rng, tmp_path):
        from bvr_reliability.dataio import Dataset
        from bvr_reliability.model import PairedSample

        ds = Dataset("r", PairedSample(rng.uniform(0.1, 5, 20), rng.uniform(0.1, 5, 20)))
        assert parse_csv(dataset_to_csv(ds)) == ds


class TestReports:
    def test_fit_json_round_trip(self, uefa_fit, tmp_path):
        path = tmp_path / "fit.json"
        write_report(uefa_fit, "json", path, full_precision=True)
        env = read_report(path)
        assert env["schema_version"] == 1
        assert env["kind"] == "fit"
        back = fit_from_payload(env["payload"])
        assert back.params == uefa_fit.params
        assert back.r_hat == uefa_fit.r_hat
        np.testing.assert_array_equal(back.info.entries, uefa_fit.info.entries)
        assert back.counts == uefa_fit.counts

    def test_default_six_digits(self, uefa_fit):
        payload = json.loads(render_report(uefa_fit))["payload"]
        assert payload["r_hat"] == float(f"{uefa_fit.r_hat:.6g}")

    def test_table1_csv_header(self):
        cfg = StudyConfig(sample_sizes=(10,), lambda0_values=(1.0,), replications=100)
        text = render_report(run_bias_mse(cfg), "csv")
        assert text.splitlines()[0] == "n,lambda0,bias,mse"
        assert len(text.splitlines()) == 2

    def test_interval_and_test_csv(self, uefa_fit):
        ci = render_report(asymptotic_ci(uefa_fit), "csv")
        assert ci.startswith("field,value\nlower,")
        t = render_report(asymptotic_test(uefa_fit, 0.3), "json")
        assert json.loads(t)["kind"] == "test"

    def test_field_order_stable(self, uefa_fit):
        assert render_report(uefa_fit) == render_report(uefa_fit)

    def test_unwritable_path(self, uefa_fit, tmp_path):
        target = tmp_path / "missing" / "out.json"
        with pytest.raises(OSError, match="out.json"):
            write_report(uefa_fit, "json", target)
        assert not target.exists()

    def test_failed_write_leaves_no_partial(self, uefa_fit, tmp_path, monkeypatch):
        target = tmp_path / "out.json"

        def boom(*a, **k):
            raise OSError("disk full")

        monkeypatch.setattr(os, "replace", boom)
        with pytest.raises(OSError, match="out.json"):
            write_report(uefa_fit, "json", target)
        assert list(tmp_path.iterdir()) == []

    def test_bad_format(self, uefa_fit):
        with pytest.raises(ValueError):
            render_report(uefa_fit, "xml")
