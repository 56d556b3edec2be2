"""Command-line front end.

    specmon run SCENARIO [--out DIR] [--threads N] [--grid-step HZ] [--theta-steps N] [--seed N]
    specmon sweep SCENARIO PATH VALUE [VALUE ...] [--out DIR] ...
    specmon schedule (--M M | SCENARIO) [--tolerance DEG] [--theta-steps N]
    specmon validate SCENARIO
    specmon metrics DIR [--write]

SCENARIO is a JSON file or the name of a bundled preset (table2, table3,
table5, fig2, fig4, fig13). Exit codes: 0 ok, 2 configuration error,
3 runtime or numerical error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .scan import describe_switch_plan, load_trace, make_time_multiplexed_schedule
from .scenario import (ConfigError, analyse, build_models, load_scenario, preset_path, run_scenario,
                       sweep)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _scenario_path(name: str) -> Path:
    p = Path(name)
    if p.exists() or p.suffix == ".json" and p.parent != Path("."):
        return p
    bundled = preset_path(name)
    return bundled if bundled.exists() else p


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "threads", None) is not None:
        out["threads"] = args.threads
    if getattr(args, "grid_step", None) is not None:
        out["grid.step_hz"] = args.grid_step
    if getattr(args, "theta_steps", None) is not None:
        out["schedule.theta_steps"] = args.theta_steps
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    return out


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False))


def _add_common(p: argparse.ArgumentParser, out: bool = True) -> None:
    if out:
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--threads", type=int, help="scan worker threads")
    p.add_argument("--grid-step", type=float, help="frequency grid step in Hz")
    p.add_argument("--theta-steps", type=int, help="tuning steps per FSR")
    p.add_argument("--seed", type=int, help="random seed for noise and theta jitter")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="specmon", description="Ring + interlaced-AWG spectral monitor simulator")
    ap.add_argument("--version", action="version", version=f"specmon {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and write its artifact bundle")
    p.add_argument("scenario")
    _add_common(p)

    p = sub.add_parser("sweep", help="run a scenario once per value of one parameter")
    p.add_argument("scenario")
    p.add_argument("path", help="dotted config path, e.g. bank.profile.width_hz or bank.interlace_offsets_hz.1")
    p.add_argument("values", nargs="*", help="JSON values")
    _add_common(p)

    p = sub.add_parser("schedule", help="print a time-multiplexed switch plan")
    p.add_argument("scenario", nargs="?")
    p.add_argument("--M", type=int)
    p.add_argument("--tolerance", type=float, default=None, help="handover tolerance in degrees")
    p.add_argument("--theta-steps", type=int, default=720)

    p = sub.add_parser("validate", help="check a scenario and print its effective config")
    p.add_argument("scenario")
    _add_common(p, out=False)

    p = sub.add_parser("metrics", help="recompute metrics from a saved bundle")
    p.add_argument("bundle")
    p.add_argument("--write", action="store_true", help="overwrite metrics.json")
    return ap


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_run(args) -> int:
    scen = load_scenario(_scenario_path(args.scenario), _overrides(args))
    res = run_scenario(scen, args.out)
    if isinstance(res, list):
        _emit({"sweep": scen.sweep["path"], "rows": res})
    else:
        _emit(res.metrics)
    return EXIT_OK


def cmd_sweep(args) -> int:
    scen = load_scenario(_scenario_path(args.scenario), _overrides(args))
    rows = sweep(scen, args.path, [_parse_value(v) for v in args.values], args.out)
    _emit({"sweep": args.path, "rows": rows})
    return EXIT_OK


def cmd_schedule(args) -> int:
    heater = None
    M = args.M
    tol = args.tolerance
    if args.scenario:
        scen = load_scenario(_scenario_path(args.scenario))
        models = build_models(scen.config)
        M = M or models.bank.M
        heater = models.heater
        if tol is None:
            tol = scen.config["schedule"]["handover_tolerance_deg"]
    if M is None:
        raise ConfigError("schedule needs --M or a scenario")
    try:
        sched = make_time_multiplexed_schedule(M, args.theta_steps, tol or 0.0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    plan = describe_switch_plan(sched)
    if heater is not None:
        for seg in plan:
            lo, hi = seg["segment_deg"]
            seg["heater_volts"] = [round(heater.voltage_for_phase(math.radians(lo)), 6),
                                   round(heater.voltage_for_phase(math.radians(hi) - 1e-12), 6)]
    _emit({"M": M, "handover_tolerance_deg": sched.handover_tolerance_deg, "segments": plan})
    return EXIT_OK


def cmd_validate(args) -> int:
    scen = load_scenario(_scenario_path(args.scenario), _overrides(args))
    _emit({"valid": True, "config_sha256": scen.digest(), "config": scen.config})
    return EXIT_OK


def cmd_metrics(args) -> int:
    bundle = Path(args.bundle)
    try:
        cfg = json.loads((bundle / "config.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {bundle / 'config.json'}: {exc}") from None
    models = build_models(cfg)
    trace = load_trace(bundle / "trace.csv", bundle / "trace.json")
    if trace.powers.shape != (models.schedule.steps, models.bank.M, models.bank.N) or not np.array_equal(
            trace.theta, models.schedule.theta):
        raise ConfigError("saved trace does not match the bundle's config")
    metrics = analyse(cfg, models, trace)["metrics"]
    if args.write:
        (bundle / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True, allow_nan=False) + "\n")
    _emit(metrics)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "schedule": cmd_schedule, "validate": cmd_validate,
            "metrics": cmd_metrics}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, ArithmeticError, OSError, RuntimeError, KeyError, IndexError) as exc:
        print(json.dumps({"error": "runtime", "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
