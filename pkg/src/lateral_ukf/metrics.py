"""Run reports: estimate error against the low-pass filtered truth."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .sim import REFERENCE_CUTOFF_HZ, Trajectory, butterworth_reference

CHANNELS = (("vy", "vy_est", 0), ("r", "r_est", 1), ("ay", "ay_est", 2))


@dataclass
class RunReport:
    scenario: str
    rmse: dict
    max_abs_error: dict
    rejected_measurements: Optional[int] = None
    mean_step_latency_s: Optional[float] = None
    config_digest: Optional[str] = None
    reference_cutoff_hz: float = REFERENCE_CUTOFF_HZ

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def config_digest(config_text: str) -> str:
    return hashlib.sha256(config_text.encode("utf-8")).hexdigest()[:16]


def reference_channels(truth: Trajectory, cutoff: float = REFERENCE_CUTOFF_HZ) -> np.ndarray:
    """Truth states passed through the reference low-pass; cutoff <= 0 returns them raw."""
    if cutoff <= 0 or len(truth) < 2:
        return truth.states.copy()
    rate = 1.0 / truth.dt
    return np.column_stack([butterworth_reference(truth.states[:, i], cutoff, rate) for i in range(3)])


def compare(estimate: dict, truth: Trajectory, cutoff: float = REFERENCE_CUTOFF_HZ, scenario: str = "") -> RunReport:
    """Error of an estimate log against the (filtered) truth.

    Estimate samples outside the truth time span are ignored; inside it the
    reference is linearly interpolated to the estimate timestamps.
    """
    ref = reference_channels(truth, cutoff)
    t = np.asarray(estimate["t_s"])
    inside = (t >= truth.t[0] - 1e-9) & (t <= truth.t[-1] + 1e-9)
    if not np.any(inside):
        raise ValueError("estimate and truth do not overlap in time")
    rmse, max_abs = {}, {}
    for name, col, i in CHANNELS:
        err = np.asarray(estimate[col])[inside] - np.interp(t[inside], truth.t, ref[:, i])
        rmse[name] = float(np.sqrt(np.mean(err**2)))
        max_abs[name] = float(np.max(np.abs(err)))
    return RunReport(scenario=scenario, rmse=rmse, max_abs_error=max_abs, reference_cutoff_hz=cutoff)
