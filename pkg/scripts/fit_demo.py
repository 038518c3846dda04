"""Recover magic-formula parameters from noisy samples and from a simulated log.

    python3 scripts/fit_demo.py --seed 2024
"""

import argparse

import numpy as np

from lateral_ukf.fitting import (
    BoundStuckError,
    ForceSamples,
    NonConvergenceError,
    extract_force_samples,
    fit_pacejka,
)
from lateral_ukf.sim import chicane_scenario, simulate_truth
from lateral_ukf.vehicle import PacejkaAxleParams, VehicleParams, magic_formula

TRUTH = PacejkaAxleParams(mu=1.6, B=9.0, C=1.4, E=0.9, Sv=0.03)


def show(label, p):
    print(f"{label:>28}: " + "  ".join(f"{k}={v:.4f}" for k, v in zip(("mu", "B", "C", "E", "Sv"), p.as_array())))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--noise", type=float, default=0.01)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    alpha = rng.uniform(-1.0, 1.0, 1000)
    samples = ForceSamples(alpha, magic_formula(alpha, TRUTH) + rng.normal(0.0, args.noise, alpha.size))
    init = PacejkaAxleParams.from_array(TRUTH.as_array() * np.array([1.3, 0.7, 1.3, 0.7, 1.3]))
    res = fit_pacejka(samples, init)
    show("truth", TRUTH)
    show("initial guess", init)
    show(f"fit ({res.iterations} iterations)", res.params)
    print(f"{'rms residual':>28}: {res.rms_residual:.4f}")

    # the chicane stays well below the force peak, so shape terms are weakly determined
    print("\nchicane log, one fit per axle and slip sign:")
    sc = chicane_scenario()
    sets = extract_force_samples(simulate_truth(sc), VehicleParams())
    for name, s in sets.items():
        try:
            fit = fit_pacejka(s, getattr(sc.truth_tires, name))
        except (NonConvergenceError, BoundStuckError) as exc:
            print(f"{name:>28}: {type(exc).__name__}: {exc}")
            continue
        show(f"{name} truth", getattr(sc.truth_tires, name))
        show(f"fit, {len(s)} rows, |a|<{np.abs(s.alpha).max():.3f}", fit.params)


if __name__ == "__main__":
    main()
