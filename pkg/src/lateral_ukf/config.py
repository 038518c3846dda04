"""INI configuration files for vehicle, tires, filter, track, scenario and noise.

Sections and keys (all optional; missing keys take the library defaults)::

    [vehicle]          m, Jz, lf, lr, h_cg, aero_cl_f, aero_cl_r,
                       static_front_ratio, vx_min, tau_ay
    [tire.<set>]       mu, B, C, E, Sv   (<set> = front_left_turn, front_right_turn,
                                          rear_left_turn, rear_right_turn)
    [filter]           alpha, beta, kappa, q_vy, q_r, q_ay,
                       r_lidar_vy, r_lidar_r, r_imu_ay, r_imu_r,
                       init_var_vy, init_var_r, init_var_ay,
                       gate_sigma, gate_max_consecutive, use_lidar, use_imu
    [track]            length_m, banking_csv (path relative to the file) or
                       banking_deg / banking_rad = "s:theta, s:theta, ..."
    [scenario]         preset, name, duration_s, dt_truth_s, grip_scale,
                       speed_profile = "t:vx, ...",
                       steering_profile_deg / steering_profile_rad = "t:delta, ..."
    [noise]            input_rate_hz, lidar_rate_hz, lidar_sigma_vy, lidar_sigma_r,
                       lidar_bias_vy, lidar_bias_r, imu_rate_hz, imu_sigma_ay,
                       imu_sigma_r, imu_bias_ay, imu_bias_r, spike_prob, spike_magnitude
    [fit]              sets, stencil, prefilter_hz, fz_floor_n, min_samples, max_iter
    [bounds]           mu, B, C, E, Sv = "lower, upper"

Variances are in SI units squared.  Angle-valued keys must carry a `_deg`
or `_rad` suffix and are converted to radians on load.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import asdict, fields, replace
from pathlib import Path

from .estimator import BankingMap, EstimatorConfig
from .fitting import DEFAULT_BOUNDS, PARAM_NAMES, SET_NAMES
from .sim import PRESETS, NoiseModel, Scenario, SourceNoise
from .ukf import SigmaConfig
from .vehicle import PacejkaAxleParams, TireParamSet, VehicleParams, default_tires


class ConfigError(ValueError):
    pass


def read_ini(path=None, text: str | None = None) -> tuple[configparser.ConfigParser, Path]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep Jz, B, C, E, Sv
    try:
        if text is not None:
            parser.read_string(text)
            base = Path(".")
        else:
            path = Path(path)
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
            base = path.parent
    except (configparser.Error, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    return parser, base


def _float(section, key, default=None):
    if key not in section:
        return default
    try:
        return float(section[key])
    except ValueError:
        raise ConfigError(f"[{section.name}] {key}: not a number: {section[key]!r}") from None


def _bool(section, key, default):
    if key not in section:
        return default
    try:
        return section.getboolean(key)
    except ValueError:
        raise ConfigError(f"[{section.name}] {key}: not a boolean") from None


def _pairs(text: str, where: str):
    pts = []
    for item in text.replace("\n", ",").split(","):
        item = item.strip()
        if not item:
            continue
        try:
            a, b = item.split(":")
            pts.append((float(a), float(b)))
        except ValueError:
            raise ConfigError(f"{where}: malformed pair {item!r}, expected x:y") from None
    if not pts:
        raise ConfigError(f"{where}: empty list")
    return tuple(pts)


def _angle_pairs(section, stem):
    deg, rad = f"{stem}_deg", f"{stem}_rad"
    if deg in section and rad in section:
        raise ConfigError(f"[{section.name}] both {deg} and {rad} given")
    if deg in section:
        return tuple((a, math.radians(b)) for a, b in _pairs(section[deg], f"[{section.name}] {deg}"))
    if rad in section:
        return _pairs(section[rad], f"[{section.name}] {rad}")
    if stem in section:
        raise ConfigError(f"[{section.name}] {stem}: angle keys need a _deg or _rad suffix")
    return None


def _known(section, allowed):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"[{section.name}] unknown keys: {', '.join(sorted(unknown))}")


def vehicle_from(parser, default: VehicleParams | None = None) -> VehicleParams:
    vp = default or VehicleParams()
    if not parser.has_section("vehicle"):
        return vp
    sec = parser["vehicle"]
    names = [f.name for f in fields(VehicleParams)]
    _known(sec, names)
    try:
        return replace(vp, **{n: _float(sec, n) for n in names if n in sec})
    except ValueError as exc:
        raise ConfigError(f"[vehicle] {exc}") from exc


def tires_from(parser, default: TireParamSet | None = None) -> TireParamSet:
    tires = default or default_tires()
    sets = {}
    for name in SET_NAMES:
        current = getattr(tires, name)
        sec_name = f"tire.{name}"
        if parser.has_section(sec_name):
            sec = parser[sec_name]
            _known(sec, PARAM_NAMES)
            try:
                current = replace(current, **{n: _float(sec, n) for n in PARAM_NAMES if n in sec})
            except ValueError as exc:
                raise ConfigError(f"[{sec_name}] {exc}") from exc
        sets[name] = current
    for sec_name in parser.sections():
        if sec_name.startswith("tire.") and sec_name[5:] not in SET_NAMES:
            raise ConfigError(f"unknown tire set [{sec_name}]")
    return TireParamSet(**sets)


def track_from(parser, base: Path, default: BankingMap | None = None) -> BankingMap:
    if not parser.has_section("track"):
        return default or BankingMap.flat()
    sec = parser["track"]
    _known(sec, ("length_m", "banking_csv", "banking_deg", "banking_rad"))
    length = _float(sec, "length_m")
    if length is None:
        raise ConfigError("[track] length_m is required")
    inline = _angle_pairs(sec, "banking")
    try:
        if "banking_csv" in sec:
            if inline is not None:
                raise ConfigError("[track] give either banking_csv or an inline banking list")
            return BankingMap.from_csv(base / sec["banking_csv"], length)
        if inline is None:
            return BankingMap.flat(length)
        s, theta = zip(*inline)
        return BankingMap(s, theta, length)
    except (OSError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[track] {exc}") from exc


FILTER_KEYS = (
    "alpha", "beta", "kappa", "q_vy", "q_r", "q_ay", "r_lidar_vy", "r_lidar_r",
    "r_imu_ay", "r_imu_r", "init_var_vy", "init_var_r", "init_var_ay",
    "gate_sigma", "gate_max_consecutive", "use_lidar", "use_imu",
)


def estimator_config_from(parser, base: Path = Path(".")) -> EstimatorConfig:
    d = EstimatorConfig()
    sigma, q, rl, ri, p0 = d.sigma, d.q_diag, d.r_lidar, d.r_imu, d.init_cov_diag
    gate, streak, use_lidar, use_imu = d.gate_sigma, d.gate_max_consecutive, d.use_lidar, d.use_imu
    if parser.has_section("filter"):
        sec = parser["filter"]
        _known(sec, FILTER_KEYS)
        try:
            sigma = SigmaConfig(_float(sec, "alpha", sigma.alpha), _float(sec, "beta", sigma.beta), _float(sec, "kappa", sigma.kappa))
        except ValueError as exc:
            raise ConfigError(f"[filter] {exc}") from exc
        q = tuple(_float(sec, k, v) for k, v in zip(("q_vy", "q_r", "q_ay"), q))
        rl = tuple(_float(sec, k, v) for k, v in zip(("r_lidar_vy", "r_lidar_r"), rl))
        ri = tuple(_float(sec, k, v) for k, v in zip(("r_imu_ay", "r_imu_r"), ri))
        p0 = tuple(_float(sec, k, v) for k, v in zip(("init_var_vy", "init_var_r", "init_var_ay"), p0))
        gate = _float(sec, "gate_sigma", gate)
        streak = int(_float(sec, "gate_max_consecutive", streak))
        use_lidar = _bool(sec, "use_lidar", use_lidar)
        use_imu = _bool(sec, "use_imu", use_imu)
    try:
        return EstimatorConfig(
            vehicle=vehicle_from(parser),
            tires=tires_from(parser),
            sigma=sigma,
            q_diag=q,
            r_lidar=rl,
            r_imu=ri,
            init_cov_diag=p0,
            gate_sigma=gate,
            gate_max_consecutive=streak,
            use_lidar=use_lidar,
            use_imu=use_imu,
            banking=track_from(parser, base),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_estimator_config(path) -> EstimatorConfig:
    parser, base = read_ini(path)
    return estimator_config_from(parser, base)


SCENARIO_KEYS = (
    "preset", "name", "duration_s", "dt_truth_s", "grip_scale", "speed_profile",
    "steering_profile_deg", "steering_profile_rad",
)


def scenario_from(parser, base: Path = Path(".")) -> Scenario:
    sec = parser["scenario"] if parser.has_section("scenario") else {}
    if sec:
        _known(sec, SCENARIO_KEYS)
    preset = sec.get("preset") if sec else None
    duration = _float(sec, "duration_s") if sec else None
    try:
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
            kw = {"duration": duration} if duration is not None else {}
            sc = PRESETS[preset](**kw)
        else:
            for key in ("duration_s", "speed_profile"):
                if not sec or key not in sec:
                    raise ConfigError(f"[scenario] {key} is required without a preset")
            sc = None
        changes = {}
        if sec:
            if "name" in sec:
                changes["name"] = sec["name"]
            if duration is not None:
                changes["duration"] = duration
            if "dt_truth_s" in sec:
                changes["dt_truth"] = _float(sec, "dt_truth_s")
            if "grip_scale" in sec:
                changes["grip_scale"] = _float(sec, "grip_scale")
            if "speed_profile" in sec:
                changes["speed_profile"] = _pairs(sec["speed_profile"], "[scenario] speed_profile")
            steer = _angle_pairs(sec, "steering_profile")
            if steer is not None:
                changes["steering_profile"] = steer
        if parser.has_section("track"):
            changes["track"] = track_from(parser, base)
        if parser.has_section("vehicle"):
            changes["truth_vehicle"] = vehicle_from(parser, sc.truth_vehicle if sc else None)
        if any(s.startswith("tire.") for s in parser.sections()):
            changes["truth_tires"] = tires_from(parser, sc.truth_tires if sc else None)
        if sc is None:
            changes.setdefault("name", "custom")
            changes.setdefault("track", BankingMap.flat(10000.0))
            changes.setdefault("steering_profile", ((0.0, 0.0), (changes["duration"], 0.0)))
            return Scenario(**changes)
        return replace(sc, **changes)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


NOISE_KEYS = (
    "input_rate_hz", "lidar_rate_hz", "lidar_sigma_vy", "lidar_sigma_r", "lidar_bias_vy",
    "lidar_bias_r", "imu_rate_hz", "imu_sigma_ay", "imu_sigma_r", "imu_bias_ay", "imu_bias_r",
    "spike_prob", "spike_magnitude",
)


def noise_from(parser) -> NoiseModel:
    nm = NoiseModel()
    if not parser.has_section("noise"):
        return nm
    sec = parser["noise"]
    _known(sec, NOISE_KEYS)
    try:
        lidar = SourceNoise(
            _float(sec, "lidar_rate_hz", nm.lidar.rate),
            (_float(sec, "lidar_sigma_vy", nm.lidar.sigma[0]), _float(sec, "lidar_sigma_r", nm.lidar.sigma[1])),
            (_float(sec, "lidar_bias_vy", nm.lidar.bias[0]), _float(sec, "lidar_bias_r", nm.lidar.bias[1])),
        )
        imu = SourceNoise(
            _float(sec, "imu_rate_hz", nm.imu.rate),
            (_float(sec, "imu_sigma_ay", nm.imu.sigma[0]), _float(sec, "imu_sigma_r", nm.imu.sigma[1])),
            (_float(sec, "imu_bias_ay", nm.imu.bias[0]), _float(sec, "imu_bias_r", nm.imu.bias[1])),
        )
        return NoiseModel(
            input_rate=_float(sec, "input_rate_hz", nm.input_rate),
            lidar=lidar,
            imu=imu,
            spike_prob=_float(sec, "spike_prob", nm.spike_prob),
            spike_magnitude=_float(sec, "spike_magnitude", nm.spike_magnitude),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[noise] {exc}") from exc


def bounds_from(parser) -> dict:
    bounds = dict(DEFAULT_BOUNDS)
    if parser.has_section("bounds"):
        sec = parser["bounds"]
        _known(sec, PARAM_NAMES)
        for name in PARAM_NAMES:
            if name in sec:
                try:
                    lo, hi = (float(v) for v in sec[name].split(","))
                except ValueError:
                    raise ConfigError(f"[bounds] {name}: expected 'lower, upper'") from None
                if not lo < hi:
                    raise ConfigError(f"[bounds] {name}: lower must be below upper")
                bounds[name] = (lo, hi)
    return bounds


# --- writers ---------------------------------------------------------------


def _num(v) -> str:
    return repr(float(v))


def estimator_config_text(cfg: EstimatorConfig, banking_csv: str | None = None) -> str:
    """INI text for `cfg`; the track is referenced by `banking_csv` if given."""
    out = io.StringIO()
    out.write("[vehicle]\n")
    for k, v in asdict(cfg.vehicle).items():
        out.write(f"{k} = {_num(v)}\n")
    for name in SET_NAMES:
        out.write(f"\n[tire.{name}]\n")
        p = getattr(cfg.tires, name)
        for k in PARAM_NAMES:
            out.write(f"{k} = {_num(getattr(p, k))}\n")
    f = {
        "alpha": cfg.sigma.alpha, "beta": cfg.sigma.beta, "kappa": cfg.sigma.kappa,
        "q_vy": cfg.q_diag[0], "q_r": cfg.q_diag[1], "q_ay": cfg.q_diag[2],
        "r_lidar_vy": cfg.r_lidar[0], "r_lidar_r": cfg.r_lidar[1],
        "r_imu_ay": cfg.r_imu[0], "r_imu_r": cfg.r_imu[1],
        "init_var_vy": cfg.init_cov_diag[0], "init_var_r": cfg.init_cov_diag[1],
        "init_var_ay": cfg.init_cov_diag[2], "gate_sigma": cfg.gate_sigma,
    }
    out.write("\n[filter]\n")
    for k, v in f.items():
        out.write(f"{k} = {_num(v)}\n")
    out.write(f"gate_max_consecutive = {cfg.gate_max_consecutive}\n")
    out.write(f"use_lidar = {str(cfg.use_lidar).lower()}\n")
    out.write(f"use_imu = {str(cfg.use_imu).lower()}\n")
    out.write("\n[track]\n")
    out.write(f"length_m = {_num(cfg.banking.track_length)}\n")
    if banking_csv is not None:
        out.write(f"banking_csv = {banking_csv}\n")
    else:
        pts = ", ".join(f"{_num(s)}:{_num(t)}" for s, t in zip(cfg.banking.s, cfg.banking.theta))
        out.write(f"banking_rad = {pts}\n")
    return out.getvalue()


def canonical_text(parser: configparser.ConfigParser) -> str:
    """Sorted, whitespace-normalized rendering used for config digests."""
    lines = []
    for sec in sorted(parser.sections()):
        lines.append(f"[{sec}]")
        for k in sorted(parser[sec]):
            lines.append(f"{k}={parser[sec][k].strip()}")
    return "\n".join(lines) + "\n"
