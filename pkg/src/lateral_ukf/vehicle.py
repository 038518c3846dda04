"""Single-track lateral dynamics with a magic-formula tire model.

All functions broadcast over numpy arrays, so the fields of `StateVec` and
`InputVec` may be scalars or equally shaped arrays (one entry per sigma
point, per log row, ...).  SI units and radians throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

GRAVITY = 9.81
MAX_DT = 0.1


class StateVec(NamedTuple):
    vy: float  # lateral velocity, m/s
    r: float  # yaw rate, rad/s, positive counterclockwise
    ay: float  # lateral acceleration, m/s^2


class InputVec(NamedTuple):
    delta: float  # front steering angle, rad
    vx: float  # longitudinal velocity, m/s
    ax: float  # longitudinal acceleration, m/s^2
    theta: float  # track banking, rad


@dataclass(frozen=True)
class VehicleParams:
    m: float = 750.0
    Jz: float = 1000.0
    lf: float = 1.7
    lr: float = 1.3
    h_cg: float = 0.3
    aero_cl_f: float = 0.55  # N s^2/m^2, downforce = coeff * vx^2
    aero_cl_r: float = 0.65
    static_front_ratio: float = 1.3 / 3.0
    vx_min: float = 1.0
    tau_ay: float = 0.05  # relaxation time of the ay state, s

    def __post_init__(self):
        for name in ("m", "Jz", "lf", "lr", "vx_min", "tau_ay"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0.0 < self.static_front_ratio < 1.0:
            raise ValueError("static_front_ratio must lie in (0, 1)")
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ValueError(f"{f.name} must be finite")

    @property
    def wheelbase(self) -> float:
        return self.lf + self.lr


@dataclass(frozen=True)
class PacejkaAxleParams:
    mu: float
    B: float
    C: float
    E: float
    Sv: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_array()):
            raise ValueError(f"non-finite tire parameter in {self}")
        if not (self.mu > 0 and self.B > 0 and self.C > 0):
            raise ValueError(f"mu, B and C must be > 0: {self}")
        if not self.E < 1:
            raise ValueError(f"E must be < 1: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.B, self.C, self.E, self.Sv])

    @classmethod
    def from_array(cls, p) -> PacejkaAxleParams:
        return cls(*(float(v) for v in p))

    def scaled(self, grip: float) -> PacejkaAxleParams:
        """Same curve shape with the peak friction multiplied by `grip`."""
        return PacejkaAxleParams(self.mu * grip, self.B, self.C, self.E, self.Sv)


@dataclass(frozen=True)
class TireParamSet:
    front_left_turn: PacejkaAxleParams
    front_right_turn: PacejkaAxleParams
    rear_left_turn: PacejkaAxleParams
    rear_right_turn: PacejkaAxleParams

    def scaled(self, grip: float) -> TireParamSet:
        return TireParamSet(
            self.front_left_turn.scaled(grip),
            self.front_right_turn.scaled(grip),
            self.rear_left_turn.scaled(grip),
            self.rear_right_turn.scaled(grip),
        )

    @classmethod
    def symmetric(cls, front: PacejkaAxleParams, rear: PacejkaAxleParams) -> TireParamSet:
        return cls(front, front, rear, rear)


def default_tires() -> TireParamSet:
    """Asymmetric oval setup: more grip and some camber thrust in left turns."""
    return TireParamSet(
        front_left_turn=PacejkaAxleParams(mu=1.65, B=10.0, C=1.5, E=0.5, Sv=0.02),
        front_right_turn=PacejkaAxleParams(mu=1.55, B=10.0, C=1.5, E=0.5, Sv=0.02),
        rear_left_turn=PacejkaAxleParams(mu=1.75, B=12.0, C=1.5, E=0.4, Sv=0.01),
        rear_right_turn=PacejkaAxleParams(mu=1.65, B=12.0, C=1.5, E=0.4, Sv=0.01),
    )


def slip_angles(state: StateVec, u: InputVec, vp: VehicleParams):
    vx = np.maximum(u.vx, vp.vx_min)
    alpha_f = -np.arctan((state.vy + state.r * vp.lf) / vx) + u.delta
    alpha_r = np.arctan(-(state.vy - state.r * vp.lr) / vx)
    return alpha_f, alpha_r


def magic_formula(alpha, p: PacejkaAxleParams):
    """Normalized lateral force of a single parameter set."""
    ba = p.B * alpha
    return p.Sv + p.mu * np.sin(p.C * np.arctan(ba - p.E * (ba - np.arctan(ba))))


def normalized_lateral_force(alpha, left: PacejkaAxleParams, right: PacejkaAxleParams):
    """Left-turn set for alpha >= 0, right-turn set for alpha < 0."""
    if np.ndim(alpha) == 0:
        return magic_formula(alpha, left if alpha >= 0 else right)
    alpha = np.asarray(alpha, dtype=float)
    return np.where(alpha >= 0, magic_formula(alpha, left), magic_formula(alpha, right))


def banking_load(m, ay, theta):
    """Total extra normal load from lateral acceleration on a banked surface."""
    # libm tan for scalars; numpy's vectorized tan can differ by one ulp
    tan = math.tan(theta) if np.ndim(theta) == 0 else np.tan(theta)
    return m * ay * tan


def normal_loads_unclamped(u: InputVec, ay, vp: VehicleParams):
    g_front = vp.m * GRAVITY * vp.static_front_ratio
    g_rear = vp.m * GRAVITY * (1.0 - vp.static_front_ratio)
    vx2 = u.vx * u.vx
    bank = banking_load(vp.m, ay, u.theta)
    dfz_long = vp.m * u.ax * vp.h_cg / vp.wheelbase
    fzf = g_front + vp.aero_cl_f * vx2 + bank * vp.static_front_ratio - dfz_long
    fzr = g_rear + vp.aero_cl_r * vx2 + bank * (1.0 - vp.static_front_ratio) + dfz_long
    return fzf, fzr


def normal_loads(u: InputVec, ay, vp: VehicleParams):
    fzf, fzr = normal_loads_unclamped(u, ay, vp)
    return np.maximum(fzf, 0.0), np.maximum(fzr, 0.0)


def lateral_forces(dyf, dyr, fzf, fzr):
    return dyf * fzf, dyr * fzr


def axle_forces(state: StateVec, u: InputVec, vp: VehicleParams, tires: TireParamSet):
    """(Fyf, Fyr) for the given state and input."""
    alpha_f, alpha_r = slip_angles(state, u, vp)
    dyf = normalized_lateral_force(alpha_f, tires.front_left_turn, tires.front_right_turn)
    dyr = normalized_lateral_force(alpha_r, tires.rear_left_turn, tires.rear_right_turn)
    fzf, fzr = normal_loads(u, state.ay, vp)
    return lateral_forces(dyf, dyr, fzf, fzr)


def state_derivative(state: StateVec, u: InputVec, vp: VehicleParams, tires: TireParamSet) -> StateVec:
    fyf, fyr = axle_forces(state, u, vp, tires)
    fyf_lat = fyf * np.cos(u.delta)
    ay_target = (fyf_lat + fyr) / vp.m
    vy_dot = -u.vx * state.r + ay_target
    r_dot = (fyf_lat * vp.lf - fyr * vp.lr) / vp.Jz
    ay_dot = (ay_target - state.ay) / vp.tau_ay
    return StateVec(vy_dot, r_dot, ay_dot)


def step_euler(state: StateVec, u: InputVec, dt: float, vp: VehicleParams, tires: TireParamSet) -> StateVec:
    if not 0.0 < dt <= MAX_DT:
        raise ValueError(f"dt must lie in (0, {MAX_DT}] s, got {dt}")
    d = state_derivative(state, u, vp, tires)
    return StateVec(state.vy + dt * d.vy, state.r + dt * d.r, state.ay + dt * d.ay)
