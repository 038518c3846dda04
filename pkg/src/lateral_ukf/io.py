"""CSV readers and writers for truth, sensor and estimate logs.

All files are UTF-8 with LF line endings and a single header row.  Floats
are written with `repr` so a read-back reproduces them exactly.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .estimator import EstimatorOutput, Source
from .sim import SensorRecord, Trajectory

SENSOR_HEADER = ("t_s", "delta_rad", "vx_mps", "ax_mps2", "s_m", "src", "m1", "m2")
TRUTH_HEADER = ("t_s", "vy_mps", "r_radps", "ay_mps2", "delta_rad", "vx_mps", "ax_mps2", "theta_rad", "s_m")
ESTIMATE_HEADER = ("t_s", "vy_est", "r_est", "ay_est", "var_vy", "var_r", "var_ay", "beta_rad", "understeer_rad")


class LogFormatError(ValueError):
    """A log file has the wrong header or too many malformed rows."""


def _fmt(v: float) -> str:
    return repr(float(v))


def _write(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _read_rows(path, header):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise LogFormatError(f"{path}: empty file") from None
        if tuple(c.strip() for c in got) != header:
            raise LogFormatError(f"{path}: expected header {','.join(header)}, got {','.join(got)}")
        yield from reader


def write_sensor_csv(path, records) -> None:
    rows = []
    for rec in records:
        src = "-" if rec.source is None else rec.source.value
        m1, m2 = ("", "") if rec.values is None else (_fmt(rec.values[0]), _fmt(rec.values[1]))
        rows.append((f"{rec.t:.6f}", _fmt(rec.delta), _fmt(rec.vx), _fmt(rec.ax), _fmt(rec.s), src, m1, m2))
    _write(path, SENSOR_HEADER, rows)


def _parse_sensor_row(row) -> SensorRecord:
    if len(row) != len(SENSOR_HEADER):
        raise ValueError(f"expected {len(SENSOR_HEADER)} fields, got {len(row)}")
    t, delta, vx, ax, s = (float(v) for v in row[:5])
    if not all(math.isfinite(v) for v in (t, delta, vx, ax, s)):
        raise ValueError("non-finite input field")
    src = row[5].strip()
    if src == "-":
        return SensorRecord(t, delta, vx, ax, s)
    # non-finite payloads are kept; the estimator skips and counts them
    return SensorRecord(t, delta, vx, ax, s, Source(src), (float(row[6]), float(row[7])))


def read_sensor_csv(path, max_bad_rows: int = 0) -> tuple[list[SensorRecord], int]:
    """Returns (records, number of malformed rows dropped)."""
    records, bad = [], 0
    last_t = -math.inf
    for lineno, row in enumerate(_read_rows(path, SENSOR_HEADER), start=2):
        try:
            rec = _parse_sensor_row(row)
        except ValueError as exc:
            bad += 1
            if bad > max_bad_rows:
                raise LogFormatError(f"{path}:{lineno}: {exc}") from exc
            continue
        if rec.t < last_t:
            raise LogFormatError(f"{path}:{lineno}: timestamps are not monotone")
        last_t = rec.t
        records.append(rec)
    if not records:
        raise LogFormatError(f"{path}: no records")
    return records, bad


def write_truth_csv(path, traj: Trajectory) -> None:
    rows = (
        (f"{t:.6f}", *(_fmt(v) for v in x), *(_fmt(v) for v in u), _fmt(s))
        for t, x, u, s in zip(traj.t, traj.states, traj.inputs, traj.s)
    )
    _write(path, TRUTH_HEADER, rows)


def read_truth_csv(path) -> Trajectory:
    data = np.array([[float(v) for v in row] for row in _read_rows(path, TRUTH_HEADER)], dtype=float)
    if data.size == 0:
        raise LogFormatError(f"{path}: no rows")
    return Trajectory(t=data[:, 0], states=data[:, 1:4], inputs=data[:, 4:8], s=data[:, 8])


def write_estimate_csv(path, outputs) -> None:
    rows = (
        (f"{o.timestamp:.6f}", *(_fmt(v) for v in o.state), *(_fmt(v) for v in o.cov_diag), _fmt(o.beta), _fmt(o.understeer))
        for o in outputs
    )
    _write(path, ESTIMATE_HEADER, rows)


def read_estimate_csv(path) -> dict[str, np.ndarray]:
    rows = [[float(v) for v in row] for row in _read_rows(path, ESTIMATE_HEADER)]
    if not rows:
        raise LogFormatError(f"{path}: no rows")
    data = np.array(rows)
    return {name: data[:, i] for i, name in enumerate(ESTIMATE_HEADER)}


def outputs_to_arrays(outputs: list[EstimatorOutput]) -> dict[str, np.ndarray]:
    return {
        "t_s": np.array([o.timestamp for o in outputs]),
        "vy_est": np.array([o.state.vy for o in outputs]),
        "r_est": np.array([o.state.r for o in outputs]),
        "ay_est": np.array([o.state.ay for o in outputs]),
        "var_vy": np.array([o.cov_diag[0] for o in outputs]),
        "var_r": np.array([o.cov_diag[1] for o in outputs]),
        "var_ay": np.array([o.cov_diag[2] for o in outputs]),
        "beta_rad": np.array([o.beta for o in outputs]),
        "understeer_rad": np.array([o.understeer for o in outputs]),
    }
