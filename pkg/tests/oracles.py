"""Independent scalar reference implementations used as test oracles.

Written straight from the model equations with the `math` module; nothing
here imports from the package under test.
"""

import math

import numpy as np

G = 9.81


def mf(alpha, mu, B, C, E, Sv):
    x = B * alpha
    return Sv + mu * math.sin(C * math.atan(x - E * (x - math.atan(x))))


def derivative(vy, r, ay, delta, vx, ax, theta, veh, tires):
    """(vy_dot, r_dot, ay_dot) of the single-track model.

    veh: dict with m, Jz, lf, lr, h_cg, cf, cr, sfr, vx_min, tau
    tires: dict name -> (mu, B, C, E, Sv) for fl, fr, rl, rr
    """
    v = max(vx, veh["vx_min"])
    af = delta - math.atan((vy + r * veh["lf"]) / v)
    ar = math.atan((r * veh["lr"] - vy) / v)
    dyf = mf(af, *(tires["fl"] if af >= 0 else tires["fr"]))
    dyr = mf(ar, *(tires["rl"] if ar >= 0 else tires["rr"]))
    m = veh["m"]
    L = veh["lf"] + veh["lr"]
    bank = m * ay * math.tan(theta)
    transfer = m * ax * veh["h_cg"] / L
    fzf = m * G * veh["sfr"] + veh["cf"] * vx**2 + bank * veh["sfr"] - transfer
    fzr = m * G * (1 - veh["sfr"]) + veh["cr"] * vx**2 + bank * (1 - veh["sfr"]) + transfer
    fyf = dyf * max(fzf, 0.0)
    fyr = dyr * max(fzr, 0.0)
    target = (fyf * math.cos(delta) + fyr) / m
    return (
        -vx * r + target,
        (fyf * math.cos(delta) * veh["lf"] - fyr * veh["lr"]) / veh["Jz"],
        (target - ay) / veh["tau"],
    )


def veh_dict(vp):
    return dict(
        m=vp.m, Jz=vp.Jz, lf=vp.lf, lr=vp.lr, h_cg=vp.h_cg, cf=vp.aero_cl_f,
        cr=vp.aero_cl_r, sfr=vp.static_front_ratio, vx_min=vp.vx_min, tau=vp.tau_ay,
    )


def tire_dict(ts):
    def t(p):
        return (p.mu, p.B, p.C, p.E, p.Sv)

    return dict(
        fl=t(ts.front_left_turn), fr=t(ts.front_right_turn),
        rl=t(ts.rear_left_turn), rr=t(ts.rear_right_turn),
    )


def bisect(fn, lo, hi, tol=1e-14, max_iter=200):
    flo = fn(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def kalman_predict(x, P, A, Q):
    return A @ x, A @ P @ A.T + Q


def kalman_update(x, P, H, R, z):
    S = H @ P @ H.T + R
    K = P @ H.T @ np.linalg.inv(S)
    x = x + K @ (z - H @ x)
    I = np.eye(P.shape[0])
    P = (I - K @ H) @ P @ (I - K @ H).T + K @ R @ K.T  # Joseph form
    return x, P
