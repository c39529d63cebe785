"""CSV emission and ingestion for trajectories and metrics tables.

Floats are written with 17 significant digits so a read-back reproduces the
binary64 values exactly.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .sim import Trajectory

TRAJECTORY_COLUMNS = (
    "t", "zeta", "theta", "phi", "zeta_dot", "theta_dot", "phi_dot",
    "tau_R", "tau", "tau_p", "phi_dot_c", "saturated",
)
METRICS_COLUMNS = (
    "scheme", "param_name", "param_value", "J", "torso_ROM_deg", "max_tau_p", "L_m", "T_s", "status",
)
SWEEP_COLUMNS = METRICS_COLUMNS + ("iterations", "kkt_residual", "max_defect")


class CSVFormatError(ValueError):
    pass


def fmt(x):
    """17-significant-digit text for a float; ints and strings pass through."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x) + 0.0  # folds -0.0 into 0.0
        if math.isnan(x):
            return "nan"
        return "%.17g" % x
    return str(x)


def _write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # newline="" plus an explicit terminator keeps output byte-identical across platforms
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_trajectory_csv(traj, path):
    data = np.column_stack([
        traj.t, traj.states, traj.inputs, traj.tau_p, traj.phi_dot_c,
    ])
    rows = ([*map(float, r), int(sat)] for r, sat in zip(data, traj.saturated))
    return _write_rows(path, TRAJECTORY_COLUMNS, rows)


def read_trajectory_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRAJECTORY_COLUMNS:
            raise CSVFormatError(f"{path}: expected header {','.join(TRAJECTORY_COLUMNS)}, got {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(TRAJECTORY_COLUMNS):
                raise CSVFormatError(f"{path}:{lineno}: expected {len(TRAJECTORY_COLUMNS)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise CSVFormatError(f"{path}:{lineno}: {exc}") from None
    if len(rows) < 2:
        raise CSVFormatError(f"{path}: need at least two data rows")
    a = np.array(rows)
    return Trajectory(a[:, 0], a[:, 1:7], a[:, 7:9], a[:, 9], a[:, 10], a[:, 11] != 0)


def metrics_row(scheme, param_name, param_value, metrics, status):
    """One metrics-table row; ``metrics`` may be ``None`` for a failed condition."""
    if metrics is None:
        vals = [math.nan] * 5
    else:
        vals = [metrics.J, metrics.torso_ROM, metrics.max_tau_p, metrics.L, metrics.T]
    return [scheme, param_name, float(param_value), *vals, status]


def write_metrics_csv(rows, path, sweep=False):
    return _write_rows(path, SWEEP_COLUMNS if sweep else METRICS_COLUMNS, rows)


def read_metrics_csv(path):
    """Rows as dicts with numeric fields converted to ``float`` (``iterations`` to ``int``)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) not in (METRICS_COLUMNS, SWEEP_COLUMNS):
            raise CSVFormatError(f"{path}: unrecognized metrics header {reader.fieldnames}")
        out = []
        for row in reader:
            for key in row:
                if key in ("scheme", "param_name", "status"):
                    continue
                row[key] = int(row[key]) if key == "iterations" else float(row[key])
            out.append(row)
    return out
