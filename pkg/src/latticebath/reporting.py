"""Delimited output and reproducibility metadata.

Every data file a command emits goes through this module so the formatting
is fixed in one place: floats as 17-significant-digit scientific notation
(round-trip exact for doubles), newline-only line endings, metadata as
leading '# key: value' comment lines. Re-running an identical configuration
therefore reproduces byte-identical CSVs; wall-clock and host facts live
only in the JSON manifest, which is written atomically (temp file plus
rename) so a crash never leaves a truncated manifest behind.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .observables import ObservableSeries


class ReportError(ValueError):
    pass


def fmt_cell(value) -> str:
    """One CSV cell; floats in a fixed, round-trip-exact representation."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17e")
    if isinstance(value, (complex, np.complexfloating)):
        raise ReportError("split complex values into _re/_im columns")
    return str(value)


class CsvWriter:
    """Incremental CSV emitter: header up front, each row flushed on write.

    Flushing per row is what preserves partial results when a sweep aborts
    midway; the rows already written stay valid CSV.
    """

    def __init__(self, path: str, columns: Sequence[str],
                 meta: Mapping[str, str] | None = None) -> None:
        self.path = path
        self.columns = tuple(columns)
        self.n_rows = 0
        self._fh: IO[str] | None = open(path, "w", newline="\n")
        for key, value in (meta or {}).items():
            self._fh.write(f"# {key}: {value}\n")
        self._fh.write(",".join(self.columns) + "\n")
        self._fh.flush()

    def add_row(self, values: Sequence) -> None:
        if self._fh is None:
            raise ReportError("writer already closed")
        if len(values) != len(self.columns):
            raise ReportError(
                f"row has {len(values)} cells, header has {len(self.columns)}")
        self._fh.write(",".join(fmt_cell(v) for v in values) + "\n")
        self._fh.flush()
        self.n_rows += 1

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "CsvWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_csv(path: str, columns: Mapping[str, Iterable],
              meta: Mapping[str, str] | None = None) -> None:
    """Whole-table convenience wrapper around CsvWriter."""
    names = list(columns)
    arrays = [list(columns[n]) for n in names]
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        raise ReportError(f"column lengths differ: {sorted(lengths)}")
    with CsvWriter(path, names, meta) as w:
        for row in zip(*arrays):
            w.add_row(row)


SERIES_COLUMNS = ("t_fs", "px_re", "px_im", "x_re", "y_re", "r2_re",
                  "overlap_re", "overlap_im", "stderr_px")


def write_series_csv(path: str, series: ObservableSeries,
                     config_hash: str) -> None:
    """Ensemble time series in the documented column layout."""
    stderr = (series.stderr_px if series.stderr_px is not None
              else np.full(series.n_records, math.nan))
    write_csv(path, {
        "t_fs": series.t_fs,
        "px_re": series.px.real, "px_im": series.px.imag,
        "x_re": series.x.real, "y_re": series.y.real,
        "r2_re": series.r2.real,
        "overlap_re": series.overlap.real, "overlap_im": series.overlap.imag,
        "stderr_px": stderr,
    }, meta={"config_hash": config_hash})


def run_summary(tau_fs: float, xi_nm: float, n_div: int,
                config_hash: str) -> dict:
    return {"tau_fs": tau_fs, "xi_nm": xi_nm, "n_div": n_div,
            "config_hash": config_hash}


_SEED_LIST_CAP = 64


def seeds_block(master_seed: int, n_realizations: int) -> dict:
    """Reproducibility record of the per-realization seed derivation.

    Realization r draws thermal amplitudes from spawn key (r, 0) and the
    noise of mode m from spawn key (r, 1, m), all under the master seed.
    Explicit keys are listed only for small ensembles; the rule above
    reconstructs them for any size.
    """
    block = {
        "master_seed": master_seed,
        "n_realizations": n_realizations,
        "thermal_spawn_key": "(r, 0)",
        "noise_spawn_key": "(r, 1, mode)",
    }
    if n_realizations <= _SEED_LIST_CAP:
        block["realization_keys"] = [
            {"r": r, "thermal": [r, 0], "noise_prefix": [r, 1]}
            for r in range(n_realizations)]
    return block


def make_manifest(command: str, config_hash: str, master_seed: int,
                  n_realizations: int, n_divergent: int,
                  wall_time_s: float, **extra) -> dict:
    manifest = {
        "command": command,
        "config_hash": config_hash,
        "tool_version": __version__,
        "seeds": seeds_block(master_seed, n_realizations),
        "n_divergent": n_divergent,
        "wall_time_s": wall_time_s,
    }
    manifest.update(extra)
    return manifest


def _json_ready(obj):
    """Recursively map non-finite floats to strings; keep the JSON valid."""
    if isinstance(obj, Mapping):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    return obj


def write_json_atomic(path: str, obj) -> None:
    """Serialize to a temp file in the target directory, then rename."""
    blob = json.dumps(_json_ready(obj), sort_keys=True, indent=2,
                      allow_nan=False) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(blob)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
