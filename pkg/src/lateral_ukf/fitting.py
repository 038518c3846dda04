"""Offline identification of magic-formula parameters from driving logs.

Axle forces are reconstructed from a log by inverting the single-track
equations, normalized by the modelled vertical loads, and a bounded
Levenberg-Marquardt fit is run per axle and turn direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sim import Trajectory, butterworth_reference
from .vehicle import (
    InputVec,
    PacejkaAxleParams,
    StateVec,
    VehicleParams,
    normal_loads,
    slip_angles,
)

PARAM_NAMES = ("mu", "B", "C", "E", "Sv")
SET_NAMES = ("front_left_turn", "front_right_turn", "rear_left_turn", "rear_right_turn")
E_MAX = 1.0 - 1e-6  # E must stay strictly below 1

SHAPE_STARTS_C = (1.0, 1.5, 2.0)
SHAPE_STARTS_E = (-1.0, 0.0, 0.5, 0.9)

DEFAULT_BOUNDS = {
    "mu": (0.3, 2.5),
    "B": (1.0, 30.0),
    "C": (0.8, 2.5),
    "E": (-2.0, E_MAX),
    "Sv": (-0.2, 0.2),
}


class FitError(RuntimeError):
    def __init__(self, message: str, result: FitResult | None = None):
        super().__init__(message)
        self.result = result


class InsufficientSamplesError(FitError):
    pass


class NonConvergenceError(FitError):
    pass


class UnidentifiableError(NonConvergenceError):
    """The samples do not constrain every parameter (e.g. all at zero slip)."""


class BoundStuckError(FitError):
    pass


@dataclass
class ForceSamples:
    alpha: np.ndarray
    dy: np.ndarray
    weight: np.ndarray = None

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.dy = np.asarray(self.dy, dtype=float)
        self.weight = np.ones_like(self.alpha) if self.weight is None else np.asarray(self.weight, dtype=float)
        if not (self.alpha.shape == self.dy.shape == self.weight.shape) or self.alpha.ndim != 1:
            raise ValueError("alpha, dy and weight must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(self.alpha)) and np.all(np.isfinite(self.dy))):
            raise ValueError("force samples must be finite")
        if np.any(self.weight <= 0) or not np.all(np.isfinite(self.weight)):
            raise ValueError("sample weights must be positive and finite")

    def __len__(self):
        return self.alpha.size

    def select(self, mask) -> ForceSamples:
        return ForceSamples(self.alpha[mask], self.dy[mask], self.weight[mask])


def _curve(alpha, p):
    mu, b, c, e, sv = p
    ba = b * alpha
    return sv + mu * np.sin(c * np.arctan(ba - e * (ba - np.arctan(ba))))


def _derivative(x, dt, stencil):
    if stencil == "forward":
        return (x[1:] - x[:-1]) / dt, slice(0, -1)
    if stencil == "central":
        return (x[2:] - x[:-2]) / (2 * dt), slice(1, -1)
    raise ValueError(f"unknown stencil {stencil!r}")


def extract_force_samples(
    log: Trajectory,
    vp: VehicleParams,
    stencil: str = "central",
    prefilter_hz: float = 5.0,
    fz_floor: float = 100.0,
    min_samples: int = 20,
) -> dict[str, ForceSamples]:
    """Per-set (alpha, normalized force) samples from a log with vy, r, ay and inputs.

    The total lateral force comes from m*(dvy/dt + vx*r) and the yaw moment
    from Jz*dr/dt, both by finite differences; solving the two equations
    gives the front and rear axle forces.  `stencil="forward"` is exact for
    logs produced by the explicit-Euler simulator; `prefilter_hz <= 0` skips
    the low-pass applied before differentiation.
    """
    if len(log) < 3:
        raise InsufficientSamplesError("log is too short to differentiate")
    dt = log.dt
    states = log.states
    if prefilter_hz > 0:
        states = np.column_stack([butterworth_reference(states[:, i], prefilter_hz, 1.0 / dt) for i in range(3)])
    vy_dot, rows = _derivative(states[:, 0], dt, stencil)
    r_dot, _ = _derivative(states[:, 1], dt, stencil)
    vy, r, ay = (states[rows, i] for i in range(3))
    delta, vx, ax, theta = (log.inputs[rows, i] for i in range(4))

    lat = vp.m * (vy_dot + vx * r)  # Fyf cos(delta) + Fyr
    yaw = vp.Jz * r_dot  # Fyf cos(delta) lf - Fyr lr
    fyf = (lat * vp.lr + yaw) / vp.wheelbase / np.cos(delta)
    fyr = (lat * vp.lf - yaw) / vp.wheelbase

    x = StateVec(vy, r, ay)
    u = InputVec(delta, vx, ax, theta)
    alpha_f, alpha_r = slip_angles(x, u, vp)
    fzf, fzr = normal_loads(u, ay, vp)

    keep = vx >= vp.vx_min
    out = {}
    for axle, alpha, fy, fz in (("front", alpha_f, fyf, fzf), ("rear", alpha_r, fyr, fzr)):
        ok = keep & (fz >= fz_floor)
        safe_fz = np.where(ok, fz, 1.0)
        dy = fy / safe_fz
        out[f"{axle}_left_turn"] = ForceSamples(alpha[ok & (alpha >= 0)], dy[ok & (alpha >= 0)])
        out[f"{axle}_right_turn"] = ForceSamples(alpha[ok & (alpha < 0)], dy[ok & (alpha < 0)])
    total = sum(len(s) for s in out.values()) // 2
    if total < min_samples:
        raise InsufficientSamplesError(f"only {total} usable rows survive, need {min_samples}")
    return out


@dataclass
class FitResult:
    params: PacejkaAxleParams
    init: PacejkaAxleParams
    rms_residual: float
    iterations: int
    converged: bool
    at_lower: dict = field(default_factory=dict)
    at_upper: dict = field(default_factory=dict)
    cost_history: list = field(default_factory=list)

    @property
    def bound_stuck(self) -> bool:
        return any(self.at_lower.values()) or any(self.at_upper.values())


def _jacobian(fun, p, f0):
    jac = np.empty((f0.size, p.size))
    for j in range(p.size):
        h = 1e-6 * max(abs(p[j]), 1e-2)
        dp = np.zeros_like(p)
        dp[j] = h
        jac[:, j] = (fun(p + dp) - fun(p - dp)) / (2 * h)
    return jac


def _truncate(p, step, lo, hi, keep=0.9):
    """Shorten `step` so it covers at most `keep` of the distance to the box.

    Clipping each coordinate separately bends the step and tends to park
    parameters on a bound on the way to an interior minimum.
    """
    room = np.where(step > 0, hi - p, np.where(step < 0, p - lo, np.inf))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(step != 0, room / np.abs(step), np.inf)
    t = ratio.min()
    return step if t >= 1.0 else keep * t * step


def _levenberg_marquardt(residual, p, lo, hi, max_iter, rtol):
    """Projected LM from `p`; returns (p, cost, history, iterations, converged)."""
    res = residual(p)
    cost = float(res @ res)
    history = [cost]
    lam = 1e-3
    converged = False
    last_rel_drop = np.inf
    # truncated steps only approach a bound geometrically; land on it instead
    snap = 1e-6 * (hi - lo)
    it = 0
    while it < max_iter:
        if cost <= 1e-30:
            converged = True
            break
        it += 1
        jac = _jacobian(residual, p, res)
        jtj = jac.T @ jac
        grad = jac.T @ res
        scale = np.diag(jtj).copy()
        scale[scale <= 0] = 1.0
        # parameters pinned at a bound with the gradient pushing outward stay put
        free = ~(((p <= lo) & (grad > 0)) | ((p >= hi) & (grad < 0)))
        accepted = False
        while lam < 1e16:
            step = np.zeros_like(p)
            try:
                a = jtj[np.ix_(free, free)] + lam * np.diag(scale[free])
                step[free] = np.linalg.solve(a, -grad[free])
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            p_new = np.clip(p + _truncate(p, step, lo, hi), lo, hi)
            p_new = np.where(p_new - lo < snap, lo, np.where(hi - p_new < snap, hi, p_new))
            res_new = residual(p_new)
            cost_new = float(res_new @ res_new)
            if cost_new <= cost:
                accepted = True
                break
            lam *= 10
        if not accepted:
            converged = True  # no descent direction left
            break
        last_rel_drop = (cost - cost_new) / cost
        p, res, cost = p_new, res_new, cost_new
        history.append(cost)
        lam = max(lam / 10, 1e-12)
        if last_rel_drop < rtol:
            converged = True
            break
    if not converged and last_rel_drop <= 1e-6:
        converged = True
    return p, cost, history, it, converged


def fit_pacejka(
    samples: ForceSamples,
    init: PacejkaAxleParams,
    bounds: dict | None = None,
    max_iter: int = 200,
    rtol: float = 1e-8,
    min_samples: int = 20,
    restarts: int = 2,
    multistart: bool = True,
) -> FitResult:
    """Weighted least-squares fit of (mu, B, C, E, Sv) inside box bounds.

    Damped Gauss-Newton with Marquardt diagonal scaling and a central
    difference Jacobian.  Besides `init`, runs start from a fixed grid of
    (C, E) shapes when `multistart` is set, and a run that ends on a bound is
    restarted up to `restarts` times with the pinned parameters moved to the
    middle of their box.  The lowest-cost converged run wins.

    Raises `NonConvergenceError` (or its subclass `UnidentifiableError`) and
    `BoundStuckError`; both carry the result.
    """
    if len(samples) < min_samples:
        raise InsufficientSamplesError(f"{len(samples)} samples, need at least {min_samples}")
    bounds = {**DEFAULT_BOUNDS, **(bounds or {})}
    lo = np.array([bounds[n][0] for n in PARAM_NAMES], dtype=float)
    hi = np.array([bounds[n][1] for n in PARAM_NAMES], dtype=float)
    # unit-mean weights make the iteration path independent of the weight scale
    sw = np.sqrt(samples.weight / np.mean(samples.weight))
    tol = 1e-9 * np.maximum(1.0, np.abs(hi - lo))

    def residual(p):
        return sw * (_curve(samples.alpha, p) - samples.dy)

    def pinned(p):
        return (p - lo <= tol) | (hi - p <= tol)

    base = np.clip(init.as_array(), lo, hi)
    starts = [base]
    if multistart:
        # the curve shape (C, E) is where the local minima live
        for c in SHAPE_STARTS_C:
            for e in SHAPE_STARTS_E:
                alt = base.copy()
                alt[2], alt[3] = c, e
                starts.append(np.clip(alt, lo, hi))
    best = None
    total_iter = 0
    queue = [(x, restarts) for x in starts]
    while queue:
        start, budget = queue.pop(0)
        run = _levenberg_marquardt(residual, start, lo, hi, max_iter, rtol)
        total_iter += run[3]
        if best is None or (run[4] and (not best[4] or run[1] < best[1])):
            best = run
        stuck = pinned(run[0])
        if run[4] and stuck.any() and budget > 0:
            queue.insert(0, (np.where(stuck, 0.5 * (lo + hi), run[0]), budget - 1))
    p, cost, history, _, converged = best

    result = FitResult(
        params=PacejkaAxleParams.from_array(p),
        init=init,
        rms_residual=float(np.sqrt(np.mean((_curve(samples.alpha, p) - samples.dy) ** 2))),
        iterations=total_iter,
        converged=converged,
        at_lower={n: bool(p[i] - lo[i] <= tol[i]) for i, n in enumerate(PARAM_NAMES)},
        at_upper={n: bool(hi[i] - p[i] <= tol[i]) for i, n in enumerate(PARAM_NAMES)},
        cost_history=history,
    )
    if not converged:
        raise NonConvergenceError(f"no convergence after {max_iter} iterations", result)

    jac = _jacobian(residual, p, residual(p))
    norms = np.linalg.norm(jac, axis=0)
    if np.any(norms <= 1e-12 * max(norms.max(), 1e-300)):
        raise UnidentifiableError("samples do not constrain every parameter", result)
    sv = np.linalg.svd(jac / norms, compute_uv=False)
    if sv[-1] < 1e-8 * sv[0]:
        raise UnidentifiableError("parameters are not jointly identifiable from these samples", result)
    if result.bound_stuck:
        stuck = [n for n in PARAM_NAMES if result.at_lower[n] or result.at_upper[n]]
        raise BoundStuckError(f"solution at bounds for {', '.join(stuck)}", result)
    return result
