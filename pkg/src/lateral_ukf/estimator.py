"""Lateral-dynamics UKF: vehicle model prediction, LiDAR-odometry and IMU updates."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import ukf
from .ukf import GaussianEstimate, SigmaConfig
from .vehicle import (
    InputVec,
    StateVec,
    TireParamSet,
    VehicleParams,
    default_tires,
    step_euler,
    MAX_DT,
)


class Source(enum.Enum):
    LIDAR = "lidar"
    IMU = "imu"


@dataclass(frozen=True)
class Measurement:
    """LiDAR payload is (vy, r); IMU payload is (ay, r)."""

    timestamp: float
    source: Source
    values: tuple[float, float]


class BankingMap:
    """Banking angle as a periodic, linearly interpolated function of arc length."""

    def __init__(self, s: Sequence[float], theta: Sequence[float], track_length: float):
        s = np.asarray(s, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if s.ndim != 1 or s.shape != theta.shape or s.size == 0:
            raise ValueError("banking samples must be two equally long 1-d sequences")
        if not track_length > 0:
            raise ValueError("track_length must be positive")
        if np.any(np.diff(s) <= 0):
            raise ValueError("banking arc lengths must be strictly increasing")
        if s[0] < 0 or s[-1] >= track_length:
            raise ValueError("banking arc lengths must lie in [0, track_length)")
        self.s = s
        self.theta = theta
        self.track_length = float(track_length)
        # wrap-around segment from the last sample back to the first
        self._xp = np.concatenate([[s[-1] - track_length], s, [s[0] + track_length]])
        self._fp = np.concatenate([[theta[-1]], theta, [theta[0]]])

    @classmethod
    def flat(cls, track_length: float = 1000.0) -> BankingMap:
        return cls([0.0], [0.0], track_length)

    def __call__(self, s):
        return np.interp(np.mod(s, self.track_length), self._xp, self._fp)

    def lookup(self, s: float) -> float:
        return float(self(s))

    @classmethod
    def from_csv(cls, path, track_length: float) -> BankingMap:
        s, theta = [], []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["s_m", "theta_rad"]:
                raise ValueError(f"{path}: expected header s_m,theta_rad")
            for row in reader:
                s.append(float(row["s_m"]))
                theta.append(float(row["theta_rad"]))
        return cls(s, theta, track_length)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("s_m,theta_rad\n")
            for s, th in zip(self.s, self.theta):
                fh.write(f"{float(s)!r},{float(th)!r}\n")


@dataclass(frozen=True)
class EstimatorOutput:
    timestamp: float
    state: StateVec
    cov_diag: tuple[float, float, float]
    beta: float
    understeer: float


def h_lidar(x):
    return np.array([x[0], x[1]])


def h_imu(x):
    return np.array([x[2], x[1]])


MEASUREMENT_FUNCTIONS = {Source.LIDAR: h_lidar, Source.IMU: h_imu}


def sideslip(vy, vx, vx_min: float = 1.0):
    return np.arctan(vy / np.maximum(vx, vx_min))


def understeer_degree(delta, r, vx, vp: VehicleParams):
    """Steering angle minus the kinematic steering L*r/vx; positive means nose-out."""
    return delta - vp.wheelbase * r / np.maximum(vx, vp.vx_min)


@dataclass
class EstimatorConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    tires: TireParamSet = field(default_factory=default_tires)
    sigma: SigmaConfig = field(default_factory=SigmaConfig)
    q_diag: tuple[float, float, float] = (2e-3, 2e-5, 0.2)
    r_lidar: tuple[float, float] = (0.15**2, 0.01**2)
    r_imu: tuple[float, float] = (0.3**2, 0.005**2)
    init_cov_diag: tuple[float, float, float] = (0.25, 0.01, 1.0)
    gate_sigma: float = 5.0  # <= 0 disables the innovation gate
    gate_max_consecutive: int = 3  # rejections in a row before a source is trusted again
    use_lidar: bool = True
    use_imu: bool = True
    banking: BankingMap = field(default_factory=BankingMap.flat)

    def __post_init__(self):
        for name in ("q_diag", "r_lidar", "r_imu", "init_cov_diag"):
            values = getattr(self, name)
            if not all(v > 0 and math.isfinite(v) for v in values):
                raise ValueError(f"{name} entries must be positive and finite: {values}")

    def r_diag(self, source: Source):
        return self.r_lidar if source is Source.LIDAR else self.r_imu

    def initial_estimate(self) -> GaussianEstimate:
        return GaussianEstimate(np.zeros(3), np.diag(self.init_cov_diag))


class LateralEstimator:
    """Runs predict/update cycles and keeps count of discarded measurements.

    The estimate itself is passed in and returned explicitly by `step`; `run`
    wraps the bookkeeping for a whole log.
    """

    def __init__(self, config: EstimatorConfig | None = None):
        self.config = config or EstimatorConfig()
        self.rejected = 0  # failed the innovation gate
        self.skipped = 0  # non-finite payload
        self._streak = {src: 0 for src in Source}

    def process(self, points: np.ndarray, u: InputVec, dt: float) -> np.ndarray:
        cfg = self.config
        x = StateVec(points[:, 0], points[:, 1], points[:, 2])
        nxt = step_euler(x, u, dt, cfg.vehicle, cfg.tires)
        return np.column_stack(nxt)

    def predict(self, est: GaussianEstimate, u: InputVec, dt: float) -> GaussianEstimate:
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        n_sub = max(1, math.ceil(dt / MAX_DT - 1e-12))
        h = dt / n_sub
        for _ in range(n_sub):
            est = ukf.predict(
                est,
                lambda pts, uu: self.process(pts, uu, h),
                u,
                self.config.q_diag,
                self.config.sigma,
                vectorized=True,
            )
        return est

    def update(self, est: GaussianEstimate, meas: Measurement) -> GaussianEstimate:
        cfg = self.config
        enabled = cfg.use_lidar if meas.source is Source.LIDAR else cfg.use_imu
        z = np.asarray(meas.values, dtype=float)
        if not enabled:
            return est
        if not np.all(np.isfinite(z)):
            self.skipped += 1
            return est
        mp = ukf.predict_measurement(est, MEASUREMENT_FUNCTIONS[meas.source], cfg.r_diag(meas.source), cfg.sigma)
        if cfg.gate_sigma > 0 and mp.mahalanobis(z) > cfg.gate_sigma:
            # a persistent disagreement is model error, not an outlier
            if self._streak[meas.source] < cfg.gate_max_consecutive:
                self._streak[meas.source] += 1
                self.rejected += 1
                return est
        self._streak[meas.source] = 0
        return ukf.correct(est, mp, z)

    def output(self, t: float, est: GaussianEstimate, delta: float, vx: float) -> EstimatorOutput:
        vp = self.config.vehicle
        vy, r, ay = (float(v) for v in est.mean)
        return EstimatorOutput(
            timestamp=t,
            state=StateVec(vy, r, ay),
            cov_diag=tuple(float(v) for v in np.diag(est.cov)),
            beta=float(sideslip(vy, vx, vp.vx_min)),
            understeer=float(understeer_degree(delta, r, vx, vp)),
        )

    def step(
        self,
        est: GaussianEstimate,
        u: tuple[float, float, float],
        track_position: float,
        measurements: Iterable[Measurement],
        dt: float,
        t: float = 0.0,
    ):
        """One filter cycle: predict over `dt` with input (delta, vx, ax), then
        apply `measurements` in order.  Returns (estimate, output)."""
        delta, vx, ax = u
        theta = self.config.banking.lookup(track_position)
        est = self.predict(est, InputVec(delta, vx, ax, theta), dt)
        for meas in measurements:
            est = self.update(est, meas)
        return est, self.output(t, est, delta, vx)

    def run(
        self,
        records: Iterable,
        est: GaussianEstimate | None = None,
        on_estimate: Callable[[float, GaussianEstimate], None] | None = None,
    ) -> list[EstimatorOutput]:
        """Stream `SensorRecord`s through the filter.

        Input rows (source None) are filter ticks.  Measurements are buffered
        and applied at the first tick at or after their timestamp.  Each tick
        predicts from the previous tick using the previous tick's inputs.
        `on_estimate(t, estimate)` is called with every posterior.
        """
        est = est if est is not None else self.config.initial_estimate()
        outputs = []
        pending: list[Measurement] = []
        prev = None
        for rec in records:
            if rec.source is not None:
                pending.append(Measurement(rec.t, rec.source, rec.values))
                continue
            if prev is None:
                for meas in pending:
                    est = self.update(est, meas)
            else:
                dt = rec.t - prev.t
                if dt <= 0:
                    raise ValueError(f"non-increasing tick timestamps at t={rec.t}")
                est, _ = self.step(est, (prev.delta, prev.vx, prev.ax), prev.s, pending, dt, rec.t)
            pending = []
            if on_estimate is not None:
                on_estimate(rec.t, est)
            outputs.append(self.output(rec.t, est, rec.delta, rec.vx))
            prev = rec
        self.estimate = est
        return outputs
