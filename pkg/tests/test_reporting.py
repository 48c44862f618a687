"""Fixed-format CSV emission and atomic JSON manifests."""
import json
import math
import os

import numpy as np
import pytest

from latticebath.observables import ObservableSeries
from latticebath.reporting import (
    CsvWriter,
    ReportError,
    fmt_cell,
    make_manifest,
    run_summary,
    seeds_block,
    write_csv,
    write_json_atomic,
    write_series_csv,
)


class TestCellFormat:
    def test_scalar_kinds(self):
        assert fmt_cell(True) == "1"
        assert fmt_cell(False) == "0"
        assert fmt_cell(np.int64(-3)) == "-3"
        assert fmt_cell("copper") == "copper"
        assert fmt_cell(math.nan) == "nan"
        assert fmt_cell(math.inf) == "inf"
        assert fmt_cell(-math.inf) == "-inf"

    def test_float_roundtrip_exact(self):
        for x in (1.0 / 3.0, 1e-300, -7.25, 6.02214076e23):
            assert float(fmt_cell(x)) == x

    def test_complex_rejected(self):
        with pytest.raises(ReportError, match="_re/_im"):
            fmt_cell(1.0 + 2.0j)


class TestCsvWriter:
    def test_incremental_rows_survive_midway(self, tmp_path):
        path = str(tmp_path / "partial.csv")
        w = CsvWriter(path, ("a", "b"), meta={"config_hash": "deadbeef0123"})
        w.add_row([1, 2.0])
        # file already readable before close: per-row flush
        lines = open(path).read().splitlines()
        assert lines[0] == "# config_hash: deadbeef0123"
        assert lines[1] == "a,b"
        assert lines[2].startswith("1,2.0")
        w.close()

    def test_row_width_checked(self, tmp_path):
        with CsvWriter(str(tmp_path / "x.csv"), ("a", "b")) as w:
            with pytest.raises(ReportError, match="cells"):
                w.add_row([1])

    def test_closed_writer_rejects_rows(self, tmp_path):
        w = CsvWriter(str(tmp_path / "x.csv"), ("a",))
        w.close()
        with pytest.raises(ReportError, match="closed"):
            w.add_row([1])

    def test_column_length_mismatch(self, tmp_path):
        with pytest.raises(ReportError, match="lengths"):
            write_csv(str(tmp_path / "x.csv"), {"a": [1, 2], "b": [1]})

    def test_byte_identical_rewrite(self, tmp_path):
        path = str(tmp_path / "x.csv")
        cols = {"t": np.linspace(0, 1, 7), "v": np.sin(np.linspace(0, 1, 7))}
        write_csv(path, cols, meta={"config_hash": "abc"})
        first = open(path, "rb").read()
        write_csv(path, cols, meta={"config_hash": "abc"})
        assert open(path, "rb").read() == first


class TestSeriesCsv:
    def test_documented_columns(self, tmp_path):
        n = 4
        series = ObservableSeries(
            t_fs=np.linspace(0, 3, n), px=np.full(n, 4.9 + 0.01j),
            x=np.zeros(n, complex), y=np.zeros(n, complex),
            r2=np.full(n, 2.0 + 0j), overlap=np.ones(n, complex),
            char_x=np.ones(n, complex), char_y=np.ones(n, complex),
            box_length=7.5, n_realizations=8,
            stderr_px=np.full(n, 0.125))
        path = str(tmp_path / "series.csv")
        write_series_csv(path, series, "cafe01234567")
        lines = open(path).read().splitlines()
        assert lines[0] == "# config_hash: cafe01234567"
        header = lines[1].split(",")
        assert header == ["t_fs", "px_re", "px_im", "x_re", "y_re", "r2_re",
                          "overlap_re", "overlap_im", "stderr_px"]
        assert len(lines) == 2 + n
        first = dict(zip(header, lines[2].split(",")))
        assert float(first["px_re"]) == 4.9
        assert float(first["stderr_px"]) == 0.125

    def test_missing_stderr_becomes_nan(self, tmp_path):
        n = 2
        series = ObservableSeries(
            t_fs=np.linspace(0, 1, n), px=np.ones(n, complex),
            x=np.zeros(n, complex), y=np.zeros(n, complex),
            r2=np.ones(n, complex), overlap=np.ones(n, complex),
            char_x=np.ones(n, complex), char_y=np.ones(n, complex),
            box_length=4.0)
        path = str(tmp_path / "series.csv")
        write_series_csv(path, series, "hash")
        assert open(path).read().splitlines()[-1].endswith(",nan")


class TestManifest:
    def test_summary_keys(self):
        s = run_summary(23.5, 1.2, 0, "abc123def456")
        assert set(s) == {"tau_fs", "xi_nm", "n_div", "config_hash"}

    def test_seed_block_lists_small_ensembles(self):
        block = seeds_block(11, 3)
        assert block["master_seed"] == 11
        assert [e["thermal"] for e in block["realization_keys"]] == [
            [0, 0], [1, 0], [2, 0]]

    def test_seed_block_caps_large_ensembles(self):
        assert "realization_keys" not in seeds_block(11, 500)

    def test_atomic_write_valid_json(self, tmp_path):
        path = str(tmp_path / "m.json")
        manifest = make_manifest("pt-benchmark", "hash", 7, 0, 0, 1.25,
                                 tau_fs=math.inf, bad=math.nan,
                                 arr=np.array([1.5, 2.5]))
        write_json_atomic(path, manifest)
        loaded = json.loads(open(path).read())
        assert loaded["tau_fs"] == "inf"
        assert loaded["bad"] == "nan"
        assert loaded["arr"] == [1.5, 2.5]
        assert loaded["tool_version"]
        assert not [f for f in os.listdir(tmp_path) if f.endswith(".tmp")]

    def test_atomic_write_replaces_existing(self, tmp_path):
        path = str(tmp_path / "m.json")
        write_json_atomic(path, {"v": 1})
        write_json_atomic(path, {"v": 2})
        assert json.loads(open(path).read()) == {"v": 2}
