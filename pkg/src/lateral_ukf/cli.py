"""Command line: simulate, estimate, fit, metrics.

Every option can also come from an environment variable named
``LATUKF_<COMMAND>_<OPTION>`` (e.g. ``LATUKF_SIMULATE_SEED=7``); flags win.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import io as logio
from .config import (
    ConfigError,
    bounds_from,
    estimator_config_from,
    estimator_config_text,
    noise_from,
    read_ini,
    scenario_from,
    tires_from,
    vehicle_from,
)
from .estimator import EstimatorConfig, LateralEstimator
from .fitting import (
    PARAM_NAMES,
    SET_NAMES,
    BoundStuckError,
    FitError,
    ForceSamples,
    InsufficientSamplesError,
    extract_force_samples,
    fit_pacejka,
)
from .metrics import RunReport, compare, config_digest
from .sim import PRESETS, simulate_truth, synthesize_sensors
from .ukf import CovarianceError, NonFiniteError, SingularInnovationError

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NUMERIC = 3
EXIT_NONCONVERGENCE = 4
EXIT_BOUND_STUCK = 5
EXIT_INSUFFICIENT = 6

ENV_PREFIX = "LATUKF"
NUMERIC_ERRORS = (CovarianceError, SingularInnovationError, NonFiniteError, FloatingPointError)


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group(context_settings={"auto_envvar_prefix": ENV_PREFIX})
def main():
    """Lateral-dynamics UKF fusing a tire model with LiDAR odometry and IMU."""


@main.command()
@click.argument("scenario")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="out", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--svg", is_flag=True, help="Also render truth channels to truth.svg.")
def simulate(scenario, out_dir, seed, svg):
    """Simulate SCENARIO (a preset name or an INI file) and write its logs.

    Writes truth.csv, sensors.csv, banking.csv and estimator.ini (a matched
    estimator configuration with the nominal, unscaled tire parameters).
    """
    try:
        if scenario in PRESETS and not Path(scenario).is_file():
            parser, base = read_ini(text=f"[scenario]\npreset = {scenario}\n")
        else:
            parser, base = read_ini(scenario)
        sc = scenario_from(parser, base)
        nm = noise_from(parser)
    except ConfigError as exc:
        _fail(EXIT_PARSE, str(exc))

    traj = simulate_truth(sc)
    records = synthesize_sensors(traj, nm, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    logio.write_truth_csv(out / "truth.csv", traj)
    logio.write_sensor_csv(out / "sensors.csv", records)
    sc.track.to_csv(out / "banking.csv")
    est_cfg = EstimatorConfig(vehicle=sc.truth_vehicle, tires=sc.truth_tires, banking=sc.track)
    (out / "estimator.ini").write_text(estimator_config_text(est_cfg, banking_csv="banking.csv"), encoding="utf-8")
    if svg:
        from .plots import save_channels

        series = {name: {"truth": (traj.t, traj.states[:, i])} for i, name in enumerate(("vy", "r", "ay"))}
        save_channels(out / "truth.svg", traj.t, series, title=sc.name)
    msg = f"{sc.name}: {len(traj)} truth samples, {len(records)} sensor records"
    if traj.spin_time is not None:
        msg += f", spin at t={traj.spin_time:.3f} s"
    click.echo(msg)


@main.command()
@click.argument("sensor_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--truth", "truth_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="out", show_default=True)
@click.option("--disable-lidar", is_flag=True, help="Model-only mode: ignore LiDAR-odometry updates.")
@click.option("--disable-imu", is_flag=True)
@click.option("--max-bad-rows", type=int, default=0, show_default=True)
@click.option("--name", default=None, help="Scenario name in the report (default: log directory name).")
@click.option("--svg", is_flag=True, help="Also render estimate vs truth to estimate.svg.")
def estimate(sensor_csv, config_file, truth_csv, out_dir, disable_lidar, disable_imu, max_bad_rows, name, svg):
    """Run the filter over SENSOR_CSV; writes estimate.csv and report.json."""
    try:
        if config_file:
            parser, base = read_ini(config_file)
        else:
            parser, base = read_ini(text="")
        cfg = estimator_config_from(parser, base)
        records, _ = logio.read_sensor_csv(sensor_csv, max_bad_rows)
        truth = logio.read_truth_csv(truth_csv) if truth_csv else None
    except (ConfigError, logio.LogFormatError) as exc:
        _fail(EXIT_PARSE, str(exc))
    except OSError as exc:
        _fail(EXIT_PARSE, str(exc))
    if disable_lidar:
        cfg.use_lidar = False
    if disable_imu:
        cfg.use_imu = False

    est = LateralEstimator(cfg)
    try:
        start = time.perf_counter()
        outputs = est.run(records)
        elapsed = time.perf_counter() - start
    except NUMERIC_ERRORS as exc:
        _fail(EXIT_NUMERIC, f"numerical fault: {exc}")
    except ValueError as exc:
        _fail(EXIT_PARSE, str(exc))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    logio.write_estimate_csv(out / "estimate.csv", outputs)
    scenario = name or Path(sensor_csv).resolve().parent.name
    arrays = logio.outputs_to_arrays(outputs)
    if truth is not None:
        report = compare(arrays, truth, scenario=scenario)
    else:
        report = RunReport(scenario=scenario, rmse={}, max_abs_error={})
    report.rejected_measurements = est.rejected
    report.mean_step_latency_s = elapsed / max(len(outputs), 1)
    report.config_digest = config_digest(estimator_config_text(cfg))
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    if svg:
        from .plots import save_channels

        t = arrays["t_s"]
        series = {}
        for i, (ch, col) in enumerate((("vy", "vy_est"), ("r", "r_est"), ("ay", "ay_est"))):
            series[ch] = {"estimate": (t, arrays[col])}
            if truth is not None:
                series[ch]["truth"] = (truth.t, truth.states[:, i])
        save_channels(out / "estimate.svg", t, series, title=scenario)
    click.echo(report.to_json())


def _read_samples_csv(path) -> ForceSamples:
    import csv

    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header not in (("alpha_rad", "dy"), ("alpha_rad", "dy", "weight")):
            raise logio.LogFormatError(f"{path}: unrecognised header {','.join(header)}")
        rows = np.array([[float(v) for v in row] for row in reader if row])
    if rows.size == 0:
        raise logio.LogFormatError(f"{path}: no rows")
    return ForceSamples(rows[:, 0], rows[:, 1], rows[:, 2] if rows.shape[1] == 3 else None)


def _params_dict(p):
    return {n: getattr(p, n) for n in PARAM_NAMES}


@main.command()
@click.argument("log_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_file", type=click.Path(dir_okay=False), default="fit_report.json", show_default=True)
def fit(log_csv, config_file, out_file):
    """Fit magic-formula parameters to LOG_CSV.

    LOG_CSV is either a truth-format log (forces are reconstructed per axle
    and turn direction) or a sample file with header alpha_rad,dy[,weight].
    Initial guesses come from the [tire.*] sections, bounds from [bounds].
    """
    try:
        parser, _ = read_ini(config_file) if config_file else read_ini(text="")
        fit_sec = parser["fit"] if parser.has_section("fit") else {}
        init_tires = tires_from(parser)
        bounds = bounds_from(parser)
        vp = vehicle_from(parser)
        min_samples = int(fit_sec.get("min_samples", 20))
        max_iter = int(fit_sec.get("max_iter", 200))
        with open(log_csv, encoding="utf-8") as fh:
            header = fh.readline().strip()
        if header.startswith("alpha_rad"):
            target = fit_sec.get("sets", "front_left_turn").split(",")[0].strip()
            if target not in SET_NAMES:
                raise ConfigError(f"[fit] sets: unknown set {target!r}")
            sample_sets = {target: _read_samples_csv(log_csv)}
        else:
            truth = logio.read_truth_csv(log_csv)
            sample_sets = extract_force_samples(
                truth,
                vp,
                stencil=fit_sec.get("stencil", "central"),
                prefilter_hz=float(fit_sec.get("prefilter_hz", 5.0)),
                fz_floor=float(fit_sec.get("fz_floor_n", 100.0)),
                min_samples=min_samples,
            )
            wanted = fit_sec.get("sets", "all")
            if wanted.strip() != "all":
                names = [s.strip() for s in wanted.split(",")]
                unknown = set(names) - set(SET_NAMES)
                if unknown:
                    raise ConfigError(f"[fit] sets: unknown {', '.join(sorted(unknown))}")
                sample_sets = {k: v for k, v in sample_sets.items() if k in names}
    except InsufficientSamplesError as exc:
        _fail(EXIT_INSUFFICIENT, str(exc))
    except (ConfigError, logio.LogFormatError, ValueError, KeyError) as exc:
        _fail(EXIT_PARSE, str(exc))

    report = {"log": str(log_csv), "sets": {}}
    for name, samples in sample_sets.items():
        init = getattr(init_tires, name)
        entry = {"samples": len(samples), "initial": _params_dict(init)}
        try:
            res = fit_pacejka(samples, init, bounds, max_iter=max_iter, min_samples=min_samples)
            entry["status"] = "converged"
        except InsufficientSamplesError as exc:
            entry.update(status="skipped", message=str(exc))
            report["sets"][name] = entry
            continue
        except FitError as exc:
            res = exc.result
            entry["status"] = "bound_stuck" if isinstance(exc, BoundStuckError) else "not_converged"
            entry["message"] = str(exc)
        except NUMERIC_ERRORS as exc:
            _fail(EXIT_NUMERIC, str(exc))
        if res is not None:
            entry.update(
                final=_params_dict(res.params),
                rms_residual=res.rms_residual,
                iterations=res.iterations,
                at_lower_bound=res.at_lower,
                at_upper_bound=res.at_upper,
            )
        report["sets"][name] = entry
    text = json.dumps(report, indent=2, sort_keys=True)
    Path(out_file).write_text(text + "\n", encoding="utf-8")
    statuses = {e["status"] for e in report["sets"].values()}
    if statuses <= {"skipped"}:
        _fail(EXIT_INSUFFICIENT, "no parameter set had enough samples to fit")
    click.echo(text)
    if "not_converged" in statuses:
        sys.exit(EXIT_NONCONVERGENCE)
    if "bound_stuck" in statuses:
        sys.exit(EXIT_BOUND_STUCK)


@main.command()
@click.argument("estimate_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("truth_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--cutoff-hz", type=float, default=5.0, show_default=True,
              help="Low-pass cutoff applied to the truth; 0 compares against the raw truth.")
@click.option("--name", default="", help="Scenario name for the report.")
def metrics(estimate_csv, truth_csv, cutoff_hz, name):
    """Error report of ESTIMATE_CSV against TRUTH_CSV, printed as JSON."""
    try:
        est = logio.read_estimate_csv(estimate_csv)
        truth = logio.read_truth_csv(truth_csv)
        report = compare(est, truth, cutoff=cutoff_hz, scenario=name)
    except (logio.LogFormatError, ValueError) as exc:
        _fail(EXIT_PARSE, str(exc))
    click.echo(report.to_json())


if __name__ == "__main__":
    main()
