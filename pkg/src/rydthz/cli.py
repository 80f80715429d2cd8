"""Batch runner: named figure scenarios and free-form config files.

    rydthz run <scenario|config.json> [--override key=value ...]
               [--out DIR] [--seed U64] [--strict]

Writes trace.csv and summary.json per run (sweeps get one subdirectory per
point plus an aggregate summary.json). Exit codes: 0 success, 1 runtime
failure, 2 config error, 3 physics-quality error in --strict mode.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys

import numpy as np

from .errors import ConfigError, RydthzError, TruncationQualityError
from .presets import preset_config
from .runio import (
    SCHEMA_VERSION,
    apply_overrides,
    build_protocol_config,
    load_config,
    summary_dict,
    validate_config,
    write_summary_json,
    write_trace_csv,
)
from .protocol import run_protocol

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_QUALITY = 3


def resolve_config(target: str) -> dict:
    """Preset name or config-file path -> validated run configuration."""
    if os.path.exists(target) or target.endswith(".json"):
        return load_config(target)
    cfg = preset_config(target)
    cfg["scenario"] = target
    return validate_config(cfg)


def _sweep_points(cfg: dict):
    if cfg.get("sweep") is None:
        return None
    points = []
    for point in cfg["sweep"]:
        merged = {k: v for k, v in cfg.items() if k != "sweep"}
        merged.update({k: v for k, v in point.items() if k != "label"})
        merged["sweep"] = None
        points.append((point["label"], validate_config(merged)))
    return points


def run_single(cfg: dict, out_dir: str, strict: bool, label: str | None = None):
    """Execute one run and write its artifacts; returns (exit_code, summary)."""
    os.makedirs(out_dir, exist_ok=True)
    pcfg = build_protocol_config(cfg)
    if cfg.get("absorption_site") is None and pcfg.absorption_site is not None:
        cfg = {**cfg, "absorption_site": pcfg.absorption_site}  # echo the default
    rng = np.random.default_rng(int(cfg["seed"]))
    quality_error = None
    try:
        result = run_protocol(pcfg, rng=rng)
    except TruncationQualityError as exc:
        quality_error = str(exc)
        result = exc.result
    result.trace.metadata.setdefault("scenario", cfg.get("scenario"))
    result.trace.metadata.setdefault("seed", cfg.get("seed"))
    doc = summary_dict(result, cfg, label=label)
    if quality_error is not None:
        doc["diagnostics"]["quality_error"] = quality_error
    if "csv" in cfg["formats"]:
        write_trace_csv(os.path.join(out_dir, "trace.csv"), result.trace)
    if "json" in cfg["formats"]:
        write_summary_json(os.path.join(out_dir, "summary.json"), doc)
    if strict and quality_error is not None:
        return EXIT_QUALITY, doc
    return EXIT_OK, doc


def run_scenario(target: str, overrides=(), out_dir="runs", seed=None, strict=False):
    """Resolve, override, execute (sweeps fan out), write artifacts.

    Returns the process exit code.
    """
    cfg = resolve_config(target)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    if seed is not None:
        cfg["seed"] = int(seed)

    points = _sweep_points(cfg)
    if points is None:
        code, _ = run_single(cfg, out_dir, strict)
        return code

    os.makedirs(out_dir, exist_ok=True)
    worst = EXIT_OK
    entries = []
    for point_label, point_cfg in points:
        code, doc = run_single(
            point_cfg, os.path.join(out_dir, point_label), strict, label=point_label
        )
        worst = max(worst, code)
        entries.append(
            {
                "label": point_label,
                "t_a": doc["t_a"],
                "s_max": doc["s_max"],
                "velocity": doc["velocity"],
                "analysis_error": doc["analysis_error"],
                "diagnostics": doc["diagnostics"],
            }
        )
    aggregate = {
        "schema": SCHEMA_VERSION,
        "scenario": cfg.get("scenario"),
        "seed": cfg.get("seed"),
        "points": entries,
        "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    write_summary_json(os.path.join(out_dir, "summary.json"), aggregate)
    return worst


def _emit_error(exc: Exception):
    doc = {"error_class": type(exc).__name__, "message": str(exc)}
    print(json.dumps(doc), file=sys.stderr)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rydthz", description="Rydberg-array THz detector simulator"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a named scenario or a config file")
    run_p.add_argument("target", help="preset name (e.g. fig2-local) or config.json")
    run_p.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="config override, repeatable (e.g. --override n_sites=7)",
    )
    run_p.add_argument("--out", default="runs", help="output directory")
    run_p.add_argument("--seed", type=int, default=None, help="seed override")
    run_p.add_argument(
        "--strict",
        action="store_true",
        help="treat physics-quality flags (TEBD truncation) as failures",
    )
    args = parser.parse_args(argv)

    try:
        return run_scenario(
            args.target,
            overrides=args.override,
            out_dir=args.out,
            seed=args.seed,
            strict=args.strict,
        )
    except ConfigError as exc:
        _emit_error(exc)
        return EXIT_CONFIG
    except RydthzError as exc:
        _emit_error(exc)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 -- CLI boundary
        _emit_error(exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
