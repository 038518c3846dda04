"""Wet track, dry tire model: compare fused and model-only estimates on one log.

    python3 scripts/wet_robustness.py --grip 0.6 --seed 7
"""

import argparse

import numpy as np

from lateral_ukf.estimator import EstimatorConfig, LateralEstimator
from lateral_ukf.io import outputs_to_arrays
from lateral_ukf.metrics import compare
from lateral_ukf.sim import NoiseModel, simulate_truth, synthesize_sensors, wet_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grip", type=float, default=0.6, help="truth friction scale")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    sc = wet_scenario(grip_scale=args.grip)
    truth = simulate_truth(sc)
    log = synthesize_sensors(truth, NoiseModel(), seed=args.seed)
    rows = {}
    for mode, use_lidar in (("fused", True), ("model-only", False)):
        est = LateralEstimator(EstimatorConfig(banking=sc.track, use_lidar=use_lidar))
        arrays = outputs_to_arrays(est.run(log))
        rows[mode] = (compare(arrays, truth).rmse["vy"], est.rejected, arrays)

    spin = f"{truth.spin_time:.3f} s" if truth.spin_time is not None else "none"
    print(f"grip scale {args.grip}, spin at {spin}")
    for mode, (rmse, rejected, _) in rows.items():
        print(f"{mode:>10}: rmse(vy) = {rmse:.4f} m/s, gated LiDAR updates = {rejected}")
    print(f"ratio fused/model-only = {rows['fused'][0] / rows['model-only'][0]:.3f}")

    fused = rows["fused"][2]
    t = fused["t_s"]
    vy = np.interp(t, truth.t, truth.states[:, 0])
    for when in np.linspace(t[0], t[-1], 8):
        k = int(np.searchsorted(t, when))
        k = min(k, len(t) - 1)
        print(f"  t={t[k]:6.3f}  vy truth={vy[k]:8.3f}  fused={fused['vy_est'][k]:8.3f}  "
              f"model-only={rows['model-only'][2]['vy_est'][k]:8.3f}")


if __name__ == "__main__":
    main()
