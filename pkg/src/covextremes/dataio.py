"""
File formats: CSV data ingestion, JSON-lines records, summary tables.

Records are one JSON object per line with a fixed key order.  Floats use
Python's shortest round-trip repr, so reading a record file back gives the
identical doubles.  Summary CSVs print floats with 17 significant digits.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .distributions import standardize_rows

__all__ = [
    "ingest_csv",
    "RecordWriter",
    "write_records",
    "read_records",
    "write_config",
    "read_config",
    "emit_summary",
    "load_summary",
    "fmt_machine",
    "fmt_human",
]

RECORD_KEYS = ("rep", "z_n", "g_top", "counts", "stable_stat", "decisions", "trace_s", "trace_s2")


def fmt_machine(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def fmt_human(x) -> str:
    if x is None:
        return "n/a"
    if isinstance(x, (bool, np.bool_)):
        return "yes" if x else "no"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".6g")


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def ingest_csv(path, standardize: bool = True) -> np.ndarray:
    """Read observations (rows) x variables (columns) into a ``p x n`` matrix.

    A first row containing any non-numeric cell is treated as a header.  With
    ``standardize`` each variable is centred and scaled to unit variance.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: no data")
    if not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: header but no data rows")
    width = len(rows[0])
    values = []
    for lineno, r in enumerate(rows, start=1):
        if len(r) != width:
            raise ValueError(f"{path}: ragged row {lineno} has {len(r)} cells, expected {width}")
        try:
            values.append([float(c) for c in r])
        except ValueError as exc:
            raise ValueError(f"{path}: non-numeric cell in data row {lineno}: {exc}") from None
    x = np.asarray(values, dtype=np.float64).T
    if x.shape[1] < 2:
        raise ValueError(f"{path}: need at least 2 observations, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{path}: non-finite value")
    if standardize:
        x = standardize_rows(x)
    return np.ascontiguousarray(x)


def _record_line(rec: dict) -> str:
    ordered = {k: rec.get(k) for k in RECORD_KEYS}
    return json.dumps(ordered, separators=(",", ":"), allow_nan=False)


class RecordWriter:
    """Append-only writer used while replications complete in order."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w")

    def extend(self, records: Iterable[dict]) -> None:
        for rec in records:
            self._fh.write(_record_line(rec) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def write_records(path, records: Iterable[dict]) -> None:
    w = RecordWriter(path)
    try:
        w.extend(records)
    finally:
        w.close()


def read_records(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_config(path, config) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")


def read_config(path):
    from .harness import ExperimentConfig

    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))


def _write_oracle(path, oracle: np.ndarray) -> None:
    arr = np.asarray(oracle, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    lines = ["\t".join(repr(float(v)) for v in row) for row in arr]
    Path(path).write_text("\n".join(lines) + "\n")


def _read_oracle(path) -> np.ndarray:
    rows = [[float(v) for v in ln.split("\t")] for ln in Path(path).read_text().splitlines() if ln.strip()]
    arr = np.asarray(rows, dtype=np.float64)
    return arr[:, 0] if arr.shape[1] == 1 else arr


def summary_csv(aggregates: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["estimator", "value"])
    for name, value in aggregates.items():
        w.writerow([name, fmt_machine(value)])
    return buf.getvalue()


def emit_summary(summary, out_dir, formats=("csv", "json"), include_records: bool = True) -> list[Path]:
    """Write records, oracle draws, provenance and the estimator table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if include_records:
        write_records(out / "records.jsonl", summary.records)
        write_config(out / "config.json", summary.config)
        written += [out / "records.jsonl", out / "config.json"]
    if summary.oracle is not None:
        _write_oracle(out / "oracle.tsv", summary.oracle)
        written.append(out / "oracle.tsv")
    (out / "provenance.json").write_text(json.dumps(summary.provenance, indent=2, sort_keys=True) + "\n")
    written.append(out / "provenance.json")
    if "csv" in formats:
        (out / "summary.csv").write_text(summary_csv(summary.aggregates))
        written.append(out / "summary.csv")
    if "json" in formats:
        clean = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in summary.aggregates.items()}
        (out / "summary.json").write_text(json.dumps(clean, indent=2) + "\n")
        written.append(out / "summary.json")
    return written


def load_summary(out_dir, reaggregate: bool = True):
    """Rebuild an EmpiricalSummary from files; aggregates are recomputed from records."""
    from .harness import EmpiricalSummary, aggregate, provenance

    out = Path(out_dir)
    config = read_config(out / "config.json")
    records = read_records(out / "records.jsonl")
    oracle: Optional[np.ndarray] = _read_oracle(out / "oracle.tsv") if (out / "oracle.tsv").exists() else None
    if reaggregate:
        aggregates = aggregate(config, records, oracle)
    else:
        aggregates = json.loads((out / "summary.json").read_text())
    return EmpiricalSummary(config, records, aggregates, oracle, provenance(config))
