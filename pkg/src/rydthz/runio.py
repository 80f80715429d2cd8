"""Run-configuration parsing and artifact serialization.

The run configuration is a strict JSON object (unknown keys are rejected at
every level) mirroring ProtocolConfig plus scenario/output bookkeeping.
trace.csv carries `t, S, S_0..S_{N-1}` with 17 significant digits; summary
files use a stable key order with the timestamp isolated in one key
(`generated_at`) so re-runs are byte-identical everywhere else.
"""

from __future__ import annotations

import copy
import datetime
import json
import numpy as np

from .dynamics import IntegratorConfig, Method, TrajectoryConfig
from .errors import ConfigError
from .model import ModelParams, PhononParams
from .protocol import (
    AbsorptionMode,
    Backend,
    ProtocolConfig,
    ProtocolResult,
    SignalTrace,
)
from .tebd import TruncationPolicy

SCHEMA_VERSION = 1

_TOP_KEYS = {
    "scenario", "seed", "formats", "sweep", "si_time_scale", "assumptions",
    "n_sites", "omega_gr", "delta_gr", "v_rr", "gamma_thz", "gamma_deph",
    "t_sense", "t_amp", "absorption", "absorption_site", "backend",
    "omega_ref", "integrator", "phonons", "trajectories", "truncation",
}
_INTEGRATOR_KEYS = {"method", "rel_tol", "abs_tol", "max_step", "n_output"}
_PHONON_KEYS = {"nu", "kappa", "cutoff"}
_TRAJECTORY_KEYS = {"n_trajectories", "master_seed", "jump_resolution"}
_TRUNCATION_KEYS = {"chi_max", "svd_cutoff", "trotter_dt"}

_DEFAULTS = {
    "scenario": None,
    "seed": 1,
    "formats": ["csv", "json"],
    "sweep": None,
    "si_time_scale": None,
    "assumptions": [],
    "omega_gr": 1.0,
    "delta_gr": 0.0,
    "v_rr": 0.0,
    "gamma_thz": 0.0,
    "gamma_deph": 0.0,
    "t_sense": 1.0,
    "absorption": "local_at_site",
    "absorption_site": None,
    "backend": "dense",
    "omega_ref": 1.0,
    "phonons": None,
    "trajectories": None,
    "truncation": None,
}
_INTEGRATOR_DEFAULTS = {
    "method": "krylov_expm",
    "rel_tol": 1e-8,
    "abs_tol": 1e-10,
    "max_step": None,
    "n_output": 601,
}


def _check_keys(d, allowed, where):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def validate_config(raw: dict) -> dict:
    """Strictly validated configuration with defaults filled in."""
    if not isinstance(raw, dict):
        raise ConfigError("run configuration must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "run config")
    cfg = copy.deepcopy(_DEFAULTS)
    cfg["integrator"] = dict(_INTEGRATOR_DEFAULTS)
    cfg.update(copy.deepcopy(raw))
    if "n_sites" not in cfg:
        raise ConfigError("n_sites is required")
    if "t_amp" not in cfg:
        raise ConfigError("t_amp is required")

    integ = dict(_INTEGRATOR_DEFAULTS)
    if raw.get("integrator") is not None:
        _check_keys(raw["integrator"], _INTEGRATOR_KEYS, "integrator")
        integ.update(raw["integrator"])
    cfg["integrator"] = integ

    for block, allowed in (
        ("phonons", _PHONON_KEYS),
        ("trajectories", _TRAJECTORY_KEYS),
        ("truncation", _TRUNCATION_KEYS),
    ):
        if cfg.get(block) is not None:
            _check_keys(cfg[block], allowed, block)

    if cfg["absorption"] not in {m.value for m in AbsorptionMode}:
        raise ConfigError(f"unknown absorption mode {cfg['absorption']!r}")
    if cfg["backend"] not in {b.value for b in Backend}:
        raise ConfigError(f"unknown backend {cfg['backend']!r}")
    if cfg["integrator"]["method"] not in {m.value for m in Method}:
        raise ConfigError(f"unknown integrator method {cfg['integrator']['method']!r}")
    bad_formats = set(cfg["formats"]) - {"csv", "json"}
    if bad_formats:
        raise ConfigError(f"unknown output format(s): {', '.join(sorted(bad_formats))}")
    site = cfg["absorption_site"]
    if site is not None and not 0 <= int(site) < int(cfg["n_sites"]):
        raise ConfigError(f"absorption_site {site} out of range")
    if cfg["sweep"] is not None:
        if not isinstance(cfg["sweep"], list):
            raise ConfigError("sweep must be a list of override objects")
        for point in cfg["sweep"]:
            _check_keys(point, (_TOP_KEYS | {"label"}) - {"sweep"}, "sweep point")
            if "label" not in point:
                raise ConfigError("every sweep point needs a label")
    return cfg


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return validate_config(raw)


# -- overrides -------------------------------------------------------------------

# CLI override shorthand: bare names route into their nested block.
_OVERRIDE_PATHS = {
    **{k: (k,) for k in _TOP_KEYS - {"integrator", "phonons", "trajectories",
                                     "truncation", "sweep", "assumptions"}},
    **{k: ("integrator", k) for k in _INTEGRATOR_KEYS},
    **{k: ("phonons", k) for k in _PHONON_KEYS},
    **{k: ("trajectories", k) for k in _TRAJECTORY_KEYS},
    **{k: ("truncation", k) for k in _TRUNCATION_KEYS},
}


def parse_override(text: str) -> tuple[tuple, object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, _, value = text.partition("=")
    key = key.strip()
    if key not in _OVERRIDE_PATHS:
        raise ConfigError(f"unknown override key {key!r}")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value  # bare strings (e.g. backend=tebd)
    return _OVERRIDE_PATHS[key], parsed


def apply_overrides(cfg: dict, overrides) -> dict:
    cfg = copy.deepcopy(cfg)
    for text in overrides:
        path, value = parse_override(text)
        target = cfg
        for part in path[:-1]:
            if target.get(part) is None:
                target[part] = {}
            target = target[part]
        target[path[-1]] = value
    return validate_config({k: v for k, v in cfg.items()})


# -- RunConfig -> ProtocolConfig ---------------------------------------------------


def build_protocol_config(cfg: dict) -> ProtocolConfig:
    model = ModelParams(
        n_sites=int(cfg["n_sites"]),
        omega_gr=float(cfg["omega_gr"]),
        delta_gr=float(cfg["delta_gr"]),
        v_rr=float(cfg["v_rr"]),
        gamma_thz=float(cfg["gamma_thz"]),
        gamma_deph=float(cfg["gamma_deph"]),
    )
    integ = cfg["integrator"]
    max_step = integ["max_step"]
    if max_step is None and integ["method"] == Method.ADAPTIVE_RK.value:
        # stiff presets oscillate at ~2|Delta|; cap the embedded-RK step
        if model.delta_gr != 0:
            max_step = 0.05 / abs(model.delta_gr)
    icfg = IntegratorConfig(
        output_grid=np.linspace(0.0, float(cfg["t_amp"]), int(integ["n_output"])),
        method=Method(integ["method"]),
        rel_tol=float(integ["rel_tol"]),
        abs_tol=float(integ["abs_tol"]),
        max_step=max_step,
    )
    phonons = None
    if cfg["phonons"] is not None:
        ph = cfg["phonons"]
        phonons = PhononParams(
            nu=float(ph["nu"]), kappa=float(ph["kappa"]), cutoff=int(ph["cutoff"])
        )
    trajectories = None
    if cfg["trajectories"] is not None:
        tr = cfg["trajectories"]
        master = tr.get("master_seed")
        trajectories = TrajectoryConfig(
            n_trajectories=int(tr["n_trajectories"]),
            master_seed=int(master if master is not None else cfg["seed"]),
            jump_resolution=float(
                tr.get("jump_resolution", 1e-6 / max(model.omega_gr, 1e-12))
            ),
        )
    truncation = None
    if cfg["truncation"] is not None:
        tn = cfg["truncation"]
        truncation = TruncationPolicy(
            trotter_dt=float(tn["trotter_dt"]),
            chi_max=int(tn.get("chi_max", 64)),
            svd_cutoff=float(tn.get("svd_cutoff", 1e-10)),
        )
    site = cfg["absorption_site"]
    mode = AbsorptionMode(cfg["absorption"])
    if site is None and mode is AbsorptionMode.LOCAL_AT_SITE:
        site = model.n_sites // 2  # central absorption by default
    return ProtocolConfig(
        model=model,
        integrator=icfg,
        t_amp=float(cfg["t_amp"]),
        t_sense=float(cfg["t_sense"]),
        absorption=mode,
        absorption_site=None if site is None else int(site),
        backend=Backend(cfg["backend"]),
        phonons=phonons,
        trajectories=trajectories,
        truncation=truncation,
        omega_ref=float(cfg["omega_ref"]),
    )


# -- artifact writers -----------------------------------------------------------


def format_float(x: float) -> str:
    return f"{x:.17g}"


def write_trace_csv(path, trace: SignalTrace):
    n = trace.n_sites
    header = "t,S," + ",".join(f"S_{j}" for j in range(n))
    lines = [header]
    for i, t in enumerate(trace.times):
        cells = [format_float(t), format_float(trace.s_total[i])]
        cells.extend(format_float(v) for v in trace.s_site[i])
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def summary_dict(result: ProtocolResult, cfg: dict, label: str | None = None) -> dict:
    """Stable-ordered summary of one run; timestamp lives only in generated_at."""
    summ = result.summary
    stages = None
    if summ is not None:
        sb = summ.stage_boundaries
        stages = {
            "early_slope": sb.early_slope,
            "early_window": list(sb.early_window),
            "mid_slope": sb.mid_slope,
            "mid_window": list(sb.mid_window),
            "crossover_time": sb.crossover_time,
        }
    doc = {
        "schema": SCHEMA_VERSION,
        "scenario": cfg.get("scenario"),
        "label": label,
        "seed": cfg.get("seed"),
        "backend": cfg.get("backend"),
        "t_a": None if summ is None else summ.t_a,
        "s_max": None if summ is None else summ.s_max,
        "velocity": None if summ is None else summ.velocity,
        "stages": stages,
        "analysis_error": result.analysis_error,
        "absorption_records": [
            {"absorbed": r.absorbed, "kind": r.kind, "time": r.time, "site": r.site}
            for r in result.records
        ],
        "diagnostics": dict(result.trace.metadata),
        "config": {k: cfg[k] for k in sorted(cfg)},
        "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    return _json_safe(doc)


def write_summary_json(path, doc: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
