"""Simulate an oval lap, run the filter with matched tires, print the error report.

    python3 scripts/run_oval.py --duration 60 --seed 0 [--svg out.svg]
"""

import argparse
import time

from lateral_ukf.estimator import EstimatorConfig, LateralEstimator
from lateral_ukf.io import outputs_to_arrays
from lateral_ukf.metrics import compare
from lateral_ukf.sim import NoiseModel, oval_scenario, simulate_truth, synthesize_sensors


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=60.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--svg", help="write an estimate-vs-truth plot here (needs matplotlib)")
    args = ap.parse_args()

    sc = oval_scenario(duration=args.duration)
    truth = simulate_truth(sc)
    log = synthesize_sensors(truth, NoiseModel(), seed=args.seed)
    est = LateralEstimator(EstimatorConfig(banking=sc.track, tires=sc.truth_tires))
    start = time.perf_counter()
    outputs = est.run(log)
    elapsed = time.perf_counter() - start

    arrays = outputs_to_arrays(outputs)
    report = compare(arrays, truth, scenario=sc.name)
    report.rejected_measurements = est.rejected
    report.mean_step_latency_s = elapsed / len(outputs)
    print(report.to_json())
    if args.svg:
        from lateral_ukf.plots import save_channels

        t = arrays["t_s"]
        series = {
            ch: {"estimate": (t, arrays[col]), "truth": (truth.t, truth.states[:, i])}
            for i, (ch, col) in enumerate((("vy", "vy_est"), ("r", "r_est"), ("ay", "ay_est")))
        }
        save_channels(args.svg, t, series, title=sc.name)


if __name__ == "__main__":
    main()
