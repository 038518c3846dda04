"""Acceptance criteria, each reported as one PASS/FAIL line.

Run with `pytest tests/test_acceptance.py`; the verdicts are repeated in the
terminal summary under "acceptance criteria".
"""

import math
import time

import numpy as np
import pytest
from click.testing import CliRunner

import oracles
from lateral_ukf import ukf
from lateral_ukf.cli import main
from lateral_ukf.estimator import EstimatorConfig, LateralEstimator, Measurement, Source
from lateral_ukf.fitting import ForceSamples, fit_pacejka
from lateral_ukf.io import outputs_to_arrays
from lateral_ukf.metrics import compare
from lateral_ukf.sim import NoiseModel, oval_scenario, simulate_truth, synthesize_sensors, wet_scenario
from lateral_ukf.ukf import GaussianEstimate, SigmaConfig
from lateral_ukf.vehicle import (
    InputVec,
    PacejkaAxleParams,
    VehicleParams,
    banking_load,
    magic_formula,
    normal_loads_unclamped,
)

pytestmark = pytest.mark.acceptance


def random_stable_system(rng, n=3, m=2):
    a = rng.normal(size=(n, n))
    a *= 0.95 / max(abs(np.linalg.eigvals(a)))
    h = rng.normal(size=(m, n))
    q = rng.uniform(1e-4, 1e-2, n)
    r = rng.uniform(1e-3, 1e-1, m)
    return a, h, q, r


def test_01_linear_oracle_equivalence(verdict):
    rng = np.random.default_rng(101)
    A, H, q, r = random_stable_system(rng)
    cfg = SigmaConfig()
    est = GaussianEstimate(np.zeros(3), np.eye(3))
    x_ref, p_ref = est.mean.copy(), est.cov.copy()
    x = rng.normal(size=3)
    worst = 0.0
    start = time.perf_counter()
    for _ in range(1000):
        x = A @ x + rng.normal(size=3) * np.sqrt(q)
        z = H @ x + rng.normal(size=2) * np.sqrt(r)
        est = ukf.predict(est, lambda s, u: A @ s, None, q, cfg)
        est = ukf.update(est, lambda s: H @ s, z, r, cfg)
        x_ref, p_ref = oracles.kalman_predict(x_ref, p_ref, A, np.diag(q))
        x_ref, p_ref = oracles.kalman_update(x_ref, p_ref, H, np.diag(r), z)
        worst = max(worst, np.abs(est.mean - x_ref).max())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 1.0
    verdict("1 linear-oracle equivalence", ok, f"max|dx|={worst:.2e} time={elapsed:.3f}s")
    assert ok


def test_02_unscented_transform_exact_for_affine_maps(verdict):
    rng = np.random.default_rng(202)
    cfg = SigmaConfig()
    worst = 0.0
    for _ in range(100):
        mean = rng.normal(size=3)
        g = rng.normal(size=(3, 3))
        cov = g @ g.T + 0.1 * np.eye(3)
        A, b = rng.normal(size=(3, 3)), rng.normal(size=3)
        out = ukf.predict(GaussianEstimate(mean, cov), lambda s, u: A @ s + b, None, np.zeros(3), cfg)
        worst = max(worst, np.abs(out.mean - (A @ mean + b)).max(), np.abs(out.cov - A @ cov @ A.T).max())
    ok = worst <= 1e-10
    verdict("2 unscented-transform exactness", ok, f"max error={worst:.2e}")
    assert ok


def test_03_covariance_health_over_a_lap(verdict):
    sc = oval_scenario(duration=90.0)
    log = synthesize_sensors(simulate_truth(sc), NoiseModel(), seed=3)
    worst = {"asym": 0.0, "min_eig": math.inf, "n": 0}

    def check(t, est):
        worst["asym"] = max(worst["asym"], np.abs(est.cov - est.cov.T).max())
        worst["min_eig"] = min(worst["min_eig"], np.linalg.eigvalsh(est.cov).min())
        worst["n"] += 1

    LateralEstimator(EstimatorConfig(banking=sc.track, tires=sc.truth_tires)).run(log, on_estimate=check)
    ok = worst["n"] >= 10_000 and worst["asym"] <= 1e-10 and worst["min_eig"] >= -1e-9
    verdict(
        "3 covariance health",
        ok,
        f"steps={worst['n']} max asym={worst['asym']:.1e} min eig={worst['min_eig']:.2e}",
    )
    assert ok


def test_04_magic_formula_properties(verdict):
    alpha = np.linspace(-1.5, 1.5, 10_000)
    worst_bound, zero_ok = 0.0, True
    for p in (
        PacejkaAxleParams(1.6, 10.0, 1.5, 0.5, 0.03),
        PacejkaAxleParams(1.2, 20.0, 1.9, -2.0, -0.1),
        PacejkaAxleParams(0.8, 5.0, 1.0, 0.99, 0.0),
    ):
        excess = np.abs(magic_formula(alpha, p) - p.Sv) - p.mu
        worst_bound = max(worst_bound, excess.max())
        zero_ok = zero_ok and magic_formula(0.0, p) == p.Sv
    sym = PacejkaAxleParams(1.6, 10.0, 1.5, 0.5, 0.0)
    odd = np.abs(magic_formula(-alpha, sym) + magic_formula(alpha, sym)).max()
    ok = worst_bound <= 0.0 and odd <= 1e-12 and zero_ok
    verdict("4 magic-formula properties", ok, f"bound excess={worst_bound:.1e} odd={odd:.1e} Dy(0)=Sv:{zero_ok}")
    assert ok


def test_05_banking_identity(verdict):
    rng = np.random.default_rng(505)
    m = rng.uniform(300.0, 2000.0, 100)
    ay = rng.uniform(-30.0, 30.0, 100)
    theta = rng.uniform(-0.5, 0.5, 100)
    exact = all(banking_load(mi, ai, ti) == mi * ai * math.tan(ti) for mi, ai, ti in zip(m, ay, theta))
    vp = VehicleParams(m=750.0)
    anchor = banking_load(750.0, 15.0, math.radians(22.0))
    # the axle loads carry the whole banking term between them
    u_bank, u_flat = InputVec(0.0, 0.0, 0.0, math.radians(22.0)), InputVec(0.0, 0.0, 0.0, 0.0)
    split = sum(normal_loads_unclamped(u_bank, 15.0, vp)) - sum(normal_loads_unclamped(u_flat, 15.0, vp))
    ok = exact and anchor == pytest.approx(4545.3, abs=0.1) and split == pytest.approx(anchor, rel=1e-12)
    verdict("5 banking identity", ok, f"100 triples exact:{exact} anchor={anchor:.1f} N")
    assert ok


def test_06_matched_model_tracking(verdict):
    start = time.perf_counter()
    sc = oval_scenario(duration=60.0)
    truth = simulate_truth(sc)
    log = synthesize_sensors(truth, NoiseModel(), seed=6)
    outs = LateralEstimator(EstimatorConfig(banking=sc.track, tires=sc.truth_tires)).run(log)
    elapsed = time.perf_counter() - start
    rmse = compare(outputs_to_arrays(outs), truth).rmse["vy"]
    ok = rmse < 0.05 and elapsed < 10.0
    verdict("6 matched-model tracking", ok, f"rmse(vy)={rmse:.4f} m/s runtime={elapsed:.2f}s")
    assert ok


def test_07_wet_robustness(verdict):
    sc = wet_scenario(grip_scale=0.6)
    truth = simulate_truth(sc)
    log = synthesize_sensors(truth, NoiseModel(), seed=7)
    # estimator tires stay at the dry defaults
    fused = outputs_to_arrays(LateralEstimator(EstimatorConfig(banking=sc.track)).run(log))
    model = outputs_to_arrays(LateralEstimator(EstimatorConfig(banking=sc.track, use_lidar=False)).run(log))
    rf, rm = compare(fused, truth).rmse["vy"], compare(model, truth).rmse["vy"]

    # build-up: from the first visible drift (|vy| > 0.1 m/s) until the spin
    vy = truth.states[:, 0]
    onset = truth.t[np.argmax(np.abs(vy) > 0.1)]
    end = truth.spin_time if truth.spin_time is not None else truth.t[-1]
    t = fused["t_s"]
    seg = (t >= onset) & (t <= end)
    sign_ok = bool(seg.any()) and bool(np.all(np.sign(fused["vy_est"][seg]) == np.sign(np.interp(t[seg], truth.t, vy))))
    ok = rf < 0.5 * rm and sign_ok
    verdict(
        "7 wet robustness",
        ok,
        f"fused={rf:.3f} model-only={rm:.3f} ratio={rf / rm:.3f} sign held over {seg.sum()} ticks:{sign_ok}",
    )
    assert ok


def test_08_fit_recovery(verdict):
    truth = PacejkaAxleParams(mu=1.6, B=9.0, C=1.4, E=0.9, Sv=0.03)
    rng = np.random.default_rng(808)
    alpha = rng.uniform(-1.0, 1.0, 1000)
    dy = np.array([oracles.mf(a, *truth.as_array()) for a in alpha]) + rng.normal(0.0, 0.01, alpha.size)
    samples = ForceSamples(alpha, dy)
    worst, slowest = 0.0, 0.0
    # every sign pattern of a 30% perturbation
    for k in range(32):
        signs = np.array([1 if k >> i & 1 else -1 for i in range(5)])
        init = truth.as_array() * (1 + 0.3 * signs)
        init[3] = min(init[3], 0.99)
        start = time.perf_counter()
        res = fit_pacejka(samples, PacejkaAxleParams.from_array(init))
        slowest = max(slowest, time.perf_counter() - start)
        worst = max(worst, np.max(np.abs(res.params.as_array() / truth.as_array() - 1)))
    ok = worst <= 0.05 and slowest < 5.0
    verdict("8 fit recovery", ok, f"32 starts, worst rel error={worst:.4f} slowest fit={slowest:.3f}s")
    assert ok


def test_09_real_time_budget(verdict):
    cfg = EstimatorConfig()
    est_obj = LateralEstimator(cfg)
    rng = np.random.default_rng(909)
    est = cfg.initial_estimate()
    n = 10_000
    start = time.perf_counter()
    for k in range(n):
        t = k * 0.008
        vy, r = 0.3 + 0.15 * rng.normal(), 0.25 + 0.01 * rng.normal()
        meas = [
            Measurement(t, Source.LIDAR, (vy, r)),
            Measurement(t, Source.IMU, (12.0 + 0.3 * rng.normal(), r)),
        ]
        est, _ = est_obj.step(est, (0.02, 50.0, 0.0), 50.0 * t, meas, 0.008, t)
    mean = (time.perf_counter() - start) / n
    ok = mean < 8e-3
    verdict("9 real-time budget", ok, f"mean step={mean * 1e3:.3f} ms over {n} steps")
    assert ok


def test_10_cli_determinism(verdict, tmp_path):
    runner = CliRunner()
    ini = tmp_path / "oval.ini"
    ini.write_text("[scenario]\npreset = oval\nduration_s = 10\n", encoding="utf-8")
    for run in ("a", "b"):
        sim, est = tmp_path / run / "sim", tmp_path / run / "est"
        res = runner.invoke(main, ["simulate", str(ini), "--out", str(sim), "--seed", "42"])
        assert res.exit_code == 0, res.output
        res = runner.invoke(
            main,
            ["estimate", str(sim / "sensors.csv"), "--config", str(sim / "estimator.ini"), "--out", str(est)],
        )
        assert res.exit_code == 0, res.output
    names = ["sim/truth.csv", "sim/sensors.csv", "sim/banking.csv", "est/estimate.csv"]
    same = [(tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names]
    ok = all(same)
    verdict("10 CLI determinism", ok, ", ".join(f"{n}:{'same' if s else 'differs'}" for n, s in zip(names, same)))
    assert ok
