import json

import numpy as np
import pytest
from click.testing import CliRunner

import oracles
from lateral_ukf import io as logio
from lateral_ukf.cli import EXIT_INSUFFICIENT, EXIT_NONCONVERGENCE, EXIT_BOUND_STUCK, EXIT_PARSE, main
from lateral_ukf.config import estimator_config_text, load_estimator_config

TRUTH = (1.6, 9.0, 1.4, 0.9, 0.03)


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args, env=None):
    return runner.invoke(main, [str(a) for a in args], env=env, catch_exceptions=False)


def write_scenario(path, body):
    path.write_text(body, encoding="utf-8")
    return path


def test_simulate_oval_is_byte_identical(runner, tmp_path):
    ini = write_scenario(tmp_path / "oval.ini", "[scenario]\npreset = oval\nduration_s = 5\n")
    for d in ("a", "b"):
        res = invoke(runner, "simulate", ini, "--out", tmp_path / d, "--seed", 7)
        assert res.exit_code == 0, res.output
    for name in ("truth.csv", "sensors.csv", "banking.csv", "estimator.ini"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_zero_duration_fails_without_files(runner, tmp_path):
    ini = write_scenario(tmp_path / "bad.ini", "[scenario]\npreset = oval\nduration_s = 0\n")
    res = runner.invoke(main, ["simulate", str(ini), "--out", str(tmp_path / "o")])
    assert res.exit_code == EXIT_PARSE
    assert not (tmp_path / "o").exists()


def test_simulate_chicane_row_counts(runner, tmp_path):
    res = invoke(runner, "simulate", "chicane", "--out", tmp_path, "--seed", 1)
    assert res.exit_code == 0
    lines = (tmp_path / "sensors.csv").read_text().splitlines()
    assert lines[0] == "t_s,delta_rad,vx_mps,ax_mps2,s_m,src,m1,m2"
    src = [ln.split(",")[5] for ln in lines[1:]]
    duration = 30.0
    for tag, rate in (("-", 125), ("lidar", 20), ("imu", 100)):
        assert abs(src.count(tag) - rate * duration) <= 1, tag


def test_seed_from_environment_and_flag_precedence(runner, tmp_path):
    ini = write_scenario(tmp_path / "s.ini", "[scenario]\npreset = oval\nduration_s = 1\n")
    invoke(runner, "simulate", ini, "--out", tmp_path / "flag7", "--seed", 7)
    invoke(runner, "simulate", ini, "--out", tmp_path / "env7", env={"LATUKF_SIMULATE_SEED": "7"})
    invoke(runner, "simulate", ini, "--out", tmp_path / "both", "--seed", 3, env={"LATUKF_SIMULATE_SEED": "7"})
    invoke(runner, "simulate", ini, "--out", tmp_path / "flag3", "--seed", 3)
    read = lambda d: (tmp_path / d / "sensors.csv").read_bytes()  # noqa: E731
    assert read("env7") == read("flag7")
    assert read("both") == read("flag3")
    assert read("flag3") != read("flag7")


def _simulate(runner, tmp_path, body, seed=7):
    ini = write_scenario(tmp_path / "scenario.ini", body)
    res = invoke(runner, "simulate", ini, "--out", tmp_path / "sim", "--seed", seed)
    assert res.exit_code == 0, res.output
    return tmp_path / "sim"


def _estimate(runner, sim, out, *extra, config=None):
    res = invoke(
        runner, "estimate", sim / "sensors.csv", "--config", config or sim / "estimator.ini",
        "--truth", sim / "truth.csv", "--out", out, *extra,
    )
    assert res.exit_code == 0, res.output
    return json.loads((out / "report.json").read_text())


def test_noiseless_matched_model_tracks_truth(runner, tmp_path):
    sim = _simulate(
        runner, tmp_path,
        "[scenario]\npreset = oval\nduration_s = 32\n"
        "[noise]\nlidar_sigma_vy = 0\nlidar_sigma_r = 0\nimu_sigma_ay = 0\nimu_sigma_r = 0\nspike_prob = 0\n",
    )
    report = _estimate(runner, sim, tmp_path / "est")
    assert report["rmse"]["vy"] < 0.02
    assert report["mean_step_latency_s"] > 0
    assert len(report["config_digest"]) == 16


def test_model_only_worse_than_fused_under_grip_mismatch(runner, tmp_path):
    sim = _simulate(runner, tmp_path, "[scenario]\npreset = oval\nduration_s = 32\n")
    cfg = load_estimator_config(sim / "estimator.ini")
    cfg.tires = cfg.tires.scaled(0.7)
    (sim / "mismatch.ini").write_text(estimator_config_text(cfg, "banking.csv"))
    fused = _estimate(runner, sim, tmp_path / "fused", config=sim / "mismatch.ini")
    model = _estimate(runner, sim, tmp_path / "model", "--disable-lidar", config=sim / "mismatch.ini")
    assert model["rmse"]["vy"] > fused["rmse"]["vy"]
    assert model["config_digest"] != fused["config_digest"]


def test_estimate_rejects_empty_sensor_file(runner, tmp_path):
    (tmp_path / "empty.csv").write_text("")
    res = runner.invoke(main, ["estimate", str(tmp_path / "empty.csv"), "--out", str(tmp_path / "o")])
    assert res.exit_code == EXIT_PARSE
    assert "error" in res.output


def test_estimate_bad_row_tolerance(runner, tmp_path):
    sim = _simulate(runner, tmp_path, "[scenario]\npreset = chicane\nduration_s = 1\n")
    lines = (sim / "sensors.csv").read_text().splitlines()
    lines.insert(5, "garbage,row")
    (sim / "bad.csv").write_text("\n".join(lines) + "\n")
    res = runner.invoke(main, ["estimate", str(sim / "bad.csv"), "--out", str(tmp_path / "o")])
    assert res.exit_code == EXIT_PARSE
    res = runner.invoke(main, ["estimate", str(sim / "bad.csv"), "--out", str(tmp_path / "o"), "--max-bad-rows", "1"])
    assert res.exit_code == 0


def test_estimate_writes_svg(runner, tmp_path):
    pytest.importorskip("matplotlib")
    sim = _simulate(runner, tmp_path, "[scenario]\npreset = chicane\nduration_s = 1\n")
    invoke(runner, "estimate", sim / "sensors.csv", "--truth", sim / "truth.csv", "--out", tmp_path / "e", "--svg")
    assert (tmp_path / "e" / "estimate.svg").read_text().startswith("<?xml")


def _samples_csv(path, alpha, dy):
    with open(path, "w") as fh:
        fh.write("alpha_rad,dy\n")
        for a, d in zip(alpha, dy):
            fh.write(f"{float(a)!r},{float(d)!r}\n")
    return path


def _fit_ini(path, init):
    mu, B, C, E, Sv = init
    path.write_text(f"[tire.front_left_turn]\nmu = {mu}\nB = {B}\nC = {C}\nE = {E}\nSv = {Sv}\n")
    return path


def test_fit_exact_samples_return_init(runner, tmp_path):
    alpha = np.linspace(-0.8, 0.8, 300)
    dy = [oracles.mf(a, *TRUTH) for a in alpha]
    res = invoke(runner, "fit", _samples_csv(tmp_path / "s.csv", alpha, dy),
                 "--config", _fit_ini(tmp_path / "f.ini", TRUTH), "--out", tmp_path / "r.json")
    assert res.exit_code == 0
    entry = json.loads((tmp_path / "r.json").read_text())["sets"]["front_left_turn"]
    assert entry["status"] == "converged"
    np.testing.assert_allclose([entry["final"][k] for k in ("mu", "B", "C", "E", "Sv")], TRUTH, atol=1e-8)


def test_fit_noisy_samples_recovered(runner, tmp_path):
    rng = np.random.default_rng(8)
    alpha = rng.uniform(-1.0, 1.0, 1000)
    dy = np.array([oracles.mf(a, *TRUTH) for a in alpha]) + rng.normal(0, 0.01, alpha.size)
    init = (1.6 * 1.3, 9.0 * 0.7, 1.4 * 1.3, 0.9 * 0.7, 0.03 * 1.3)
    res = invoke(runner, "fit", _samples_csv(tmp_path / "s.csv", alpha, dy),
                 "--config", _fit_ini(tmp_path / "f.ini", init), "--out", tmp_path / "r.json")
    assert res.exit_code == 0
    final = json.loads((tmp_path / "r.json").read_text())["sets"]["front_left_turn"]["final"]
    np.testing.assert_allclose([final[k] for k in ("mu", "B", "C", "E", "Sv")], TRUTH, rtol=0.05)


def test_fit_degenerate_samples_signalled(runner, tmp_path):
    res = runner.invoke(main, ["fit", str(_samples_csv(tmp_path / "s.csv", np.zeros(40), np.full(40, 0.03))),
                               "--out", str(tmp_path / "r.json")])
    assert res.exit_code in (EXIT_NONCONVERGENCE, EXIT_BOUND_STUCK)
    entry = json.loads((tmp_path / "r.json").read_text())["sets"]["front_left_turn"]
    assert entry["status"] in ("not_converged", "bound_stuck")


def test_fit_too_few_samples(runner, tmp_path):
    res = runner.invoke(main, ["fit", str(_samples_csv(tmp_path / "s.csv", [0.1] * 5, [0.5] * 5)),
                               "--out", str(tmp_path / "r.json")])
    assert res.exit_code == EXIT_INSUFFICIENT


def test_fit_truth_log_reports_every_set(runner, tmp_path):
    sim = _simulate(runner, tmp_path, "[scenario]\npreset = chicane\n")
    (tmp_path / "f.ini").write_text("[fit]\nstencil = forward\nprefilter_hz = 0\n")
    res = runner.invoke(main, ["fit", str(sim / "truth.csv"), "--config", str(tmp_path / "f.ini"),
                               "--out", str(tmp_path / "r.json")])
    report = json.loads((tmp_path / "r.json").read_text())
    assert set(report["sets"]) == {"front_left_turn", "front_right_turn", "rear_left_turn", "rear_right_turn"}
    assert res.exit_code in (0, EXIT_NONCONVERGENCE, EXIT_BOUND_STUCK)


def _truth_and_estimate(tmp_path, runner, offset=0.0, shift=0):
    sim = _simulate(runner, tmp_path, "[scenario]\npreset = oval\nduration_s = 25\n")
    truth = logio.read_truth_csv(sim / "truth.csv")
    states = np.roll(truth.states, shift, axis=0)
    if shift:
        states[:shift] = truth.states[0]
    lines = ["t_s,vy_est,r_est,ay_est,var_vy,var_r,var_ay,beta_rad,understeer_rad"]
    for t, (vy, r, ay) in zip(truth.t, states):
        lines.append(f"{t:.6f},{float(vy + offset)!r},{float(r)!r},{float(ay)!r},0.0,0.0,0.0,0.0,0.0")
    (tmp_path / "est.csv").write_text("\n".join(lines) + "\n")
    return sim / "truth.csv", tmp_path / "est.csv", truth


def test_metrics_identity_is_zero(runner, tmp_path):
    truth_csv, est_csv, _ = _truth_and_estimate(tmp_path, runner)
    res = invoke(runner, "metrics", est_csv, truth_csv, "--cutoff-hz", 0)
    rep = json.loads(res.output)
    assert rep["rmse"] == {"vy": 0.0, "r": 0.0, "ay": 0.0}


def test_metrics_constant_offset(runner, tmp_path):
    truth_csv, est_csv, _ = _truth_and_estimate(tmp_path, runner, offset=0.1)
    rep = json.loads(invoke(runner, "metrics", est_csv, truth_csv, "--cutoff-hz", 0).output)
    assert rep["rmse"]["vy"] == pytest.approx(0.1, abs=1e-12)
    assert rep["rmse"]["r"] == 0.0


def test_metrics_one_sample_shift_bounded_by_step_change(runner, tmp_path):
    truth_csv, est_csv, truth = _truth_and_estimate(tmp_path, runner, shift=1)
    rep = json.loads(invoke(runner, "metrics", est_csv, truth_csv, "--cutoff-hz", 0).output)
    for i, ch in enumerate(("vy", "r", "ay")):
        bound = np.abs(np.diff(truth.states[:, i])).max()
        assert 0 < rep["rmse"][ch] <= bound + 1e-15


def test_metrics_default_uses_filtered_truth(runner, tmp_path):
    truth_csv, est_csv, _ = _truth_and_estimate(tmp_path, runner)
    rep = json.loads(invoke(runner, "metrics", est_csv, truth_csv).output)
    assert rep["reference_cutoff_hz"] == 5.0
    assert rep["rmse"]["vy"] > 0
