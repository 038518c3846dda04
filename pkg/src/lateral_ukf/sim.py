"""Ground-truth scenarios, synthetic multi-rate sensor logs and the reference filter."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .estimator import BankingMap, Source
from .vehicle import (
    InputVec,
    StateVec,
    TireParamSet,
    VehicleParams,
    default_tires,
    state_derivative,
)

REFERENCE_CUTOFF_HZ = 5.0


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    track: BankingMap
    speed_profile: tuple  # ((t, vx), ...), piecewise linear
    steering_profile: tuple  # ((t, delta_rad), ...), piecewise linear
    dt_truth: float = 0.001
    truth_tires: TireParamSet = field(default_factory=default_tires)
    truth_vehicle: VehicleParams = field(default_factory=VehicleParams)
    grip_scale: float = 1.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"scenario duration must be positive, got {self.duration}")
        if not self.dt_truth > 0:
            raise ValueError("dt_truth must be positive")
        if not self.grip_scale > 0:
            raise ValueError("grip_scale must be positive")
        for name in ("speed_profile", "steering_profile"):
            prof = np.asarray(getattr(self, name), dtype=float)
            if prof.ndim != 2 or prof.shape[1] != 2 or len(prof) < 1:
                raise ValueError(f"{name} must be a sequence of (t, value) pairs")
            if np.any(np.diff(prof[:, 0]) <= 0):
                raise ValueError(f"{name} times must be strictly increasing")
            if prof[0, 0] > 0 or prof[-1, 0] < self.duration:
                raise ValueError(f"{name} must cover [0, {self.duration}] s")
            if not np.all(np.isfinite(prof)):
                raise ValueError(f"{name} contains non-finite values")
        if min(v for _, v in self.speed_profile) < 0:
            raise ValueError("speed profile must be non-negative")


@dataclass(frozen=True)
class SourceNoise:
    rate: float  # Hz
    sigma: tuple[float, float]
    bias: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("sensor rate must be positive")
        if min(self.sigma) < 0:
            raise ValueError("noise sigmas must be non-negative")


@dataclass(frozen=True)
class NoiseModel:
    input_rate: float = 125.0
    lidar: SourceNoise = SourceNoise(20.0, (0.08, 0.01))
    imu: SourceNoise = SourceNoise(100.0, (0.3, 0.005))
    spike_prob: float = 0.01  # per LiDAR sample
    spike_magnitude: float = 1.5  # m/s, added to vy with random sign

    def __post_init__(self):
        if not self.input_rate > 0:
            raise ValueError("input rate must be positive")
        if not 0.0 <= self.spike_prob < 1.0:
            raise ValueError("spike probability must lie in [0, 1)")

    @classmethod
    def noiseless(cls, **kw) -> NoiseModel:
        base = cls(**kw)
        return replace(
            base,
            lidar=SourceNoise(base.lidar.rate, (0.0, 0.0)),
            imu=SourceNoise(base.imu.rate, (0.0, 0.0)),
            spike_prob=0.0,
        )


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray  # (n, 3) vy, r, ay
    inputs: np.ndarray  # (n, 4) delta, vx, ax, theta
    s: np.ndarray
    spin_time: Optional[float] = None

    def __len__(self):
        return self.t.size

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self) > 1 else 0.0


class SensorRecord(NamedTuple):
    t: float
    delta: float
    vx: float
    ax: float
    s: float
    source: Optional[Source] = None
    values: Optional[tuple[float, float]] = None


def _profile(profile, t):
    prof = np.asarray(profile, dtype=float)
    return np.interp(t, prof[:, 0], prof[:, 1])


def _profile_slope(profile, t):
    prof = np.asarray(profile, dtype=float)
    if len(prof) < 2:
        return np.zeros_like(t)
    slopes = np.diff(prof[:, 1]) / np.diff(prof[:, 0])
    idx = np.clip(np.searchsorted(prof[:, 0], t, side="right") - 1, 0, len(slopes) - 1)
    inside = (t >= prof[0, 0]) & (t < prof[-1, 0])
    return np.where(inside, slopes[idx], 0.0)


def scenario_inputs(sc: Scenario):
    """Time grid, input matrix and arc length, all independent of the state."""
    n = int(round(sc.duration / sc.dt_truth)) + 1
    t = np.arange(n) * sc.dt_truth
    vx = _profile(sc.speed_profile, t)
    ax = _profile_slope(sc.speed_profile, t)
    delta = _profile(sc.steering_profile, t)
    s = np.concatenate([[0.0], np.cumsum(vx[:-1] * sc.dt_truth)])
    theta = sc.track(s)
    return t, np.column_stack([delta, vx, ax, theta]), s


def simulate_truth(sc: Scenario) -> Trajectory:
    """Euler-integrate the vehicle model along the scenario.

    A spin (|vy| > vx) ends the run; the trajectory is truncated at that
    sample and `spin_time` is set.
    """
    t, inputs, s = scenario_inputs(sc)
    vp = sc.truth_vehicle
    tires = sc.truth_tires.scaled(sc.grip_scale)
    dt = sc.dt_truth
    n = t.size
    states = np.zeros((n, 3))
    x = StateVec(0.0, 0.0, 0.0)
    spin_time = None
    last = n - 1
    for k in range(n - 1):
        u = InputVec(*inputs[k])
        d = state_derivative(x, u, vp, tires)
        x = StateVec(x.vy + dt * d.vy, x.r + dt * d.r, x.ay + dt * d.ay)
        states[k + 1] = x
        if abs(x.vy) > inputs[k + 1, 1]:
            spin_time = float(t[k + 1])
            last = k + 1
            break
    keep = slice(0, last + 1)
    return Trajectory(t[keep], states[keep], inputs[keep], s[keep], spin_time)


def _sample_indices(traj: Trajectory, rate: float) -> np.ndarray:
    step = 1.0 / rate
    n = int(math.floor(traj.t[-1] / step + 1e-9)) + 1
    return np.rint(np.arange(n) * step / traj.dt).astype(np.int64)


def synthesize_sensors(traj: Trajectory, nm: NoiseModel, seed: int = 0) -> list[SensorRecord]:
    """Multi-rate noisy LiDAR-odometry and IMU samples interleaved with input ticks.

    At equal timestamps measurements precede the input tick, LiDAR before IMU.
    """
    if len(traj) < 2:
        raise ValueError("trajectory needs at least two samples")
    rng = np.random.default_rng(seed)

    lidar_idx = _sample_indices(traj, nm.lidar.rate)
    lidar_truth = traj.states[lidar_idx][:, [0, 1]]
    lidar = lidar_truth + np.asarray(nm.lidar.bias) + rng.normal(size=lidar_truth.shape) * np.asarray(nm.lidar.sigma)
    spikes = rng.random(lidar_idx.size) < nm.spike_prob
    signs = np.where(rng.random(lidar_idx.size) < 0.5, -1.0, 1.0)
    lidar[:, 0] += spikes * signs * nm.spike_magnitude

    imu_idx = _sample_indices(traj, nm.imu.rate)
    imu_truth = traj.states[imu_idx][:, [2, 1]]
    imu = imu_truth + np.asarray(nm.imu.bias) + rng.normal(size=imu_truth.shape) * np.asarray(nm.imu.sigma)

    tick_idx = _sample_indices(traj, nm.input_rate)

    keyed = []
    for order, idx, src, vals in (
        (0, lidar_idx, Source.LIDAR, lidar),
        (1, imu_idx, Source.IMU, imu),
        (2, tick_idx, None, None),
    ):
        for j, k in enumerate(idx):
            keyed.append((int(k), order, src, None if vals is None else (float(vals[j, 0]), float(vals[j, 1]))))
    keyed.sort(key=lambda e: (e[0], e[1]))

    records = []
    for k, _, src, vals in keyed:
        delta, vx, ax, _theta = traj.inputs[k]
        records.append(SensorRecord(float(traj.t[k]), float(delta), float(vx), float(ax), float(traj.s[k]), src, vals))
    return records


def count_spikes(nm: NoiseModel, n_samples: int, seed: int) -> int:
    """Number of LiDAR spikes `synthesize_sensors` would draw for n samples."""
    rng = np.random.default_rng(seed)
    rng.normal(size=(n_samples, 2))
    return int(np.sum(rng.random(n_samples) < nm.spike_prob))


def butterworth_coefficients(cutoff: float, rate: float):
    """First-order low-pass via the bilinear transform with frequency prewarping.

    Returns (b0, b1, a1) for y[n] = b0 x[n] + b1 x[n-1] - a1 y[n-1].
    """
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    if not cutoff < rate / 2:
        raise ValueError(f"cutoff {cutoff} Hz is not below the Nyquist frequency {rate / 2} Hz")
    k = math.tan(math.pi * cutoff / rate)
    b = k / (1.0 + k)
    return b, b, (k - 1.0) / (k + 1.0)


def butterworth_reference(channel, cutoff: float = REFERENCE_CUTOFF_HZ, rate: float = 1000.0) -> np.ndarray:
    """Causal first-order Butterworth low-pass, started at steady state on the first sample."""
    b0, b1, a1 = butterworth_coefficients(cutoff, rate)
    x = np.asarray(channel, dtype=float)
    y = np.empty_like(x)
    if x.size == 0:
        return y
    x_prev = y_prev = x[0]
    for i, xi in enumerate(x):
        y_prev = b0 * xi + b1 * x_prev - a1 * y_prev
        x_prev = xi
        y[i] = y_prev
    return y


# --- presets -------------------------------------------------------------


def _ramp_profile(segments, duration):
    """Hold/ramp steering profile from (t_start, t_end, value, ramp) corner list."""
    pts = [(0.0, 0.0)]
    for t0, t1, value, ramp in segments:
        pts += [(t0, 0.0), (t0 + ramp, value), (t1 - ramp, value), (t1, 0.0)]
    pts.append((max(duration, pts[-1][0] + 1e-3), 0.0))
    out = []
    for p in pts:
        if out and p[0] <= out[-1][0]:
            continue
        out.append(p)
    return tuple(out)


def oval_track(straight: float = 1021.5, radius: float = 200.0, straight_bank_deg: float = 5.0):
    """Two-turn oval with 15 deg banking in turns 1-2 and 22 deg in turns 3-4."""
    turn = math.pi * radius
    length = 2 * straight + 2 * turn
    blend = 100.0
    b0 = math.radians(straight_bank_deg)
    b12 = math.radians(15.0)
    b34 = math.radians(22.0)
    t12 = straight
    t34 = 2 * straight + turn
    pts = [
        (0.0, b0),
        (t12 - blend, b0),
        (t12 + blend, b12),
        (t12 + turn - blend, b12),
        (t12 + turn + blend, b0),
        (t34 - blend, b0),
        (t34 + blend, b34),
        (t34 + turn - blend, b34),
    ]  # turn 4 exit blends back to b0 through the wrap-around
    s, th = zip(*pts)
    return BankingMap(s, th, length), (t12, t34, turn)


def oval_scenario(duration: float = 60.0, vx: float = 55.0, grip_scale: float = 1.0) -> Scenario:
    track, (t12, t34, turn) = oval_track()
    ramp = 2.5
    delta = 0.0195
    corners = []
    for start in (t12, t34, t12 + track.track_length, t34 + track.track_length):
        t0 = start / vx - ramp / 2
        t1 = (start + turn) / vx + ramp / 2
        if t0 < duration:
            corners.append((t0, t1, delta, ramp))
    return Scenario(
        name="oval",
        duration=duration,
        track=track,
        speed_profile=((0.0, vx), (duration, vx)),
        steering_profile=_ramp_profile(corners, duration),
        grip_scale=grip_scale,
    )


def _hold_to(profile, duration):
    """Extend a profile with its last value up to `duration` if it ends earlier."""
    if duration > profile[-1][0]:
        return profile + ((duration, profile[-1][1]),)
    return profile


def chicane_scenario(duration: float = 30.0) -> Scenario:
    """Flat road course: braking into a left-right chicane and a fast right-hander."""
    speed = _hold_to(((0.0, 60.0), (4.0, 60.0), (6.0, 35.0), (10.0, 35.0), (14.0, 50.0), (20.0, 50.0)), duration)
    steer = _hold_to(
        (
            (0.0, 0.0), (6.0, 0.0), (6.8, 0.06), (7.6, 0.06), (8.6, -0.06),
            (9.4, -0.06), (10.2, 0.0), (18.0, 0.0), (19.5, -0.03), (24.0, -0.03), (25.5, 0.0),
        ),
        duration,
    )
    return Scenario(
        name="chicane",
        duration=duration,
        track=BankingMap.flat(5793.0),
        speed_profile=speed,
        steering_profile=steer,
    )


def wet_scenario(duration: float = 10.0, grip_scale: float = 0.6) -> Scenario:
    """Long right-hander entered on lift-off with reduced grip; ends in a spin."""
    speed = _hold_to(((0.0, 45.0), (3.0, 45.0), (5.0, 38.0)), duration)
    steer = _hold_to(((0.0, 0.0), (2.0, 0.0), (4.0, -0.0375)), duration)
    return Scenario(
        name="wet",
        duration=duration,
        track=BankingMap.flat(5793.0),
        speed_profile=speed,
        steering_profile=steer,
        grip_scale=grip_scale,
    )


PRESETS = {"oval": oval_scenario, "chicane": chicane_scenario, "wet": wet_scenario}
