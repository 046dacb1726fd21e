"""CSV output of runs and comparison summaries.

Floats are written with 17 significant digits so that reading a file back
reproduces every value exactly, and identical runs give identical bytes.
Column names carry their unit as a suffix (``_pu``, ``_deg``, ``_mw``, ...).
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .engine import RunResult

SUMMARY_FIELDS = [
    "scenario", "mode", "status", "max_omega_r_pu", "max_p_over_rated",
    "max_dbeta_dt_deg_s", "max_torque_pu", "min_pcc_voltage_pu", "violations_speed",
    "violations_power", "violations_pitch_rate", "violations_torque", "error",
]


def _fmt(x):
    return format(float(x), ".17g")


def write_run_csv(result: RunResult, path):
    """Write one header row and one row per step; returns the path."""
    path = Path(path)
    buf = io.StringIO()
    buf.write(",".join(result.columns) + "\n")
    for row in result.data:
        buf.write(",".join(_fmt(x) for x in row) + "\n")
    path.write_text(buf.getvalue())
    return path


def read_run_csv(path):
    """Return ``(columns, data)`` from a run CSV."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = [[float(x) for x in row] for row in reader if row]
    data = np.array(rows, dtype=float).reshape(len(rows), len(columns))
    return columns, data


def summary_row(scenario, mode, result: RunResult | None = None, error=None):
    row = {k: "" for k in SUMMARY_FIELDS}
    row.update(scenario=scenario, mode=mode, status="ok" if error is None else "failed")
    if result is not None:
        row.update(result.summary.as_row())
    if error is not None:
        row["error"] = str(error)
    return row


def write_summary(rows, path):
    path = Path(path)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in row.items()})
    path.write_text(buf.getvalue())
    return path


def read_summary(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
