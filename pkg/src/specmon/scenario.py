"""JSON scenarios: validation, defaults, model construction, run and sweep bundles."""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

from . import __version__
from .analysis import (crosstalk_residual_db, edge_rolloff, metrics_record, reconstruction_error,
                       ripple)
from .awg import AwgBank, ChannelProfile, import_smatrix
from .core import C, Spectrum, WdmChannel, flat_spectrum, load_spectrum, make_grid, wdm_spectrum, zero_spectrum
from .reconstruct import (HandoverPolicy, VirtualChannelTrace, calibrate_and_assemble, crosstalk_correct,
                          save_reconstruction, synthesize_all)
from .ring import DEVICE_GROUP_INDEX, HeaterModel, RingModel, calibrate_to_fwhm, fwhm_analytic
from .scan import (DEFAULT_THETA_STEPS, DetectorTrace, ScanSchedule, make_parallel_schedule,
                   make_time_multiplexed_schedule, run_scan, save_trace)

DEFAULT_FSR_TOLERANCE_HZ = 0.1e9
DEFAULT_PSD_LEVEL = 1e-12
_JITTER_SEED_OFFSET = 1_000_003
EDGE_MARGIN_FWHM = 5.0  # error metrics skip this many linewidths at the band edges


class ConfigError(ValueError):
    """Scenario file unreadable, schema-invalid, or failing a cross-check."""


def schema() -> dict:
    return json.loads(resources.files("specmon").joinpath("scenario.schema.json").read_text())


def preset_path(name: str) -> Path:
    p = resources.files("specmon").joinpath("presets", name if name.endswith(".json") else name + ".json")
    return Path(str(p))


# -- loading ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Scenario:
    config: dict  # effective config, every default filled in
    source: Path | None = None
    threads: int = 1  # runtime only; never changes results, so kept out of the config hash

    @property
    def scenario_id(self) -> str:
        return self.config["scenario_id"]

    @property
    def sweep(self) -> dict | None:
        return self.config.get("sweep")

    def digest(self) -> str:
        return config_sha256(self.config)

    def build(self) -> "Models":
        return build_models(self.config)


def config_sha256(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode()).hexdigest()


def _parse_json(text: str, origin: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        lines = text.splitlines()
        context = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
        raise ConfigError(f"{origin}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {context}") from None


def load_scenario(path: str | Path, overrides: dict | None = None) -> Scenario:
    """Read, validate and cross-check a scenario file.

    ``overrides`` maps dotted config paths to values (command-line flags) and is
    applied before defaults are filled in.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc.strerror}") from None
    raw = _parse_json(text, str(path))
    return scenario_from_dict(raw, base_dir=path.parent, overrides=overrides, source=path)


def scenario_from_dict(raw: dict, base_dir: str | Path = ".", overrides: dict | None = None,
                       source: Path | None = None) -> Scenario:
    raw = copy.deepcopy(raw)
    _validate_schema(raw)
    for key, value in (overrides or {}).items():
        set_path(raw, key, value, create=True)
    _validate_schema(raw)
    threads = raw.pop("threads", 1)
    cfg = normalize(raw, Path(base_dir))
    build_models(cfg)  # runs every cross-check
    return Scenario(cfg, source, threads)


def _validate_schema(raw: dict) -> None:
    try:
        jsonschema.validate(raw, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"scenario invalid at {where}: {exc.message}") from None


def normalize(raw: dict, base_dir: Path) -> dict:
    """Fill every default so the echoed config fully determines the run."""
    cfg = copy.deepcopy(raw)
    cfg.setdefault("description", "")
    cfg.setdefault("seed", 0)
    cfg.setdefault("fsr_tolerance_hz", DEFAULT_FSR_TOLERANCE_HZ)
    cfg["grid"].setdefault("step_hz", 25e6)

    inp = cfg["input"]
    if inp["kind"] == "flat":
        inp.setdefault("level_w_per_hz", DEFAULT_PSD_LEVEL)
        inp.setdefault("band_hz", None)
    elif inp["kind"] == "wdm":
        inp.setdefault("channels", [])
        for ch in inp["channels"]:
            ch.setdefault("shape", "rectangular")
    elif inp["kind"] == "file":
        if "path" not in inp:
            raise ConfigError("input kind 'file' needs a path")
        inp["path"] = str((base_dir / inp["path"]).resolve())
        if inp.get("lines_path"):
            inp["lines_path"] = str((base_dir / inp["lines_path"]).resolve())
    inp.setdefault("lines", [])

    ring = cfg["ring"]
    if "fsr_hz" in ring and "circumference_m" in ring:
        raise ConfigError("ring: give either fsr_hz or circumference_m, not both")
    if "fsr_hz" in ring:
        ng = ring.get("group_index", [[1545.0, 1.76841]])
        if len(ng) != 1:
            raise ConfigError("ring: fsr_hz describes a dispersion-free ring; give one group_index sample")
        ring["group_index"] = ng
        ring["circumference_m"] = C / (ng[0][1] * ring.pop("fsr_hz"))
    elif "circumference_m" not in ring:
        raise ConfigError("ring: circumference_m or fsr_hz is required")
    ring.setdefault("group_index", [list(s) for s in DEVICE_GROUP_INDEX])
    ring.setdefault("loss_db_per_cm", 0.4)
    ring.setdefault("loss_slope_db_per_cm_per_thz", 0.0)
    if "r1" in ring:
        if "fwhm_target_hz" in ring:
            raise ConfigError("ring: give either explicit r1/r2 or fwhm_target_hz")
        ring.setdefault("r2", ring["r1"])
    else:
        if "r2" in ring:
            raise ConfigError("ring: r2 given without r1")
        ring.setdefault("fwhm_target_hz", 1.30e9)
    heater = ring.setdefault("heater", {})
    heater.setdefault("R_ohm", 734.0)
    heater.setdefault("k_rad_per_w", 2.0 * math.pi / 0.5)
    heater.setdefault("theta0_rad", 0.0)

    bank = cfg["bank"]
    if "smatrix_path" in bank:
        extra = set(bank) - {"smatrix_path", "crosstalk_floor_db", "M", "N"}
        if extra:
            raise ConfigError(f"bank: table-driven bank does not take {sorted(extra)}")
        bank["smatrix_path"] = str((base_dir / bank["smatrix_path"]).resolve())
        bank.setdefault("crosstalk_floor_db", None)
    else:
        missing = [k for k in ("M", "N", "spacing_hz", "first_channel_hz") if k not in bank]
        if missing:
            raise ConfigError(f"bank: missing {missing}")
        M = bank["M"]
        bank.setdefault("profile", {"kind": "raised_cosine", "width_hz": bank["spacing_hz"] / 2})
        bank["profile"].setdefault("order", 1.0)
        bank.setdefault("interlace_offsets_hz", [j * bank["spacing_hz"] / M for j in range(M)])
        bank.setdefault("detune_hz", [0.0] * M)
        bank.setdefault("envelope_db", 0.0)
        bank.setdefault("crosstalk_floor_db", None)
        bank.setdefault("awg_fsr_hz", None)
        bank.setdefault("split_ratio", 1.0)

    sched = cfg.setdefault("schedule", {})
    if "M" in bank:
        sched.setdefault("M", bank["M"])
    sched.setdefault("mode", "parallel")
    sched.setdefault("theta_steps", DEFAULT_THETA_STEPS)
    sched.setdefault("handover_tolerance_deg", 0.0)

    rec = cfg.setdefault("reconstruction", {})
    rec.setdefault("handover_shift_deg", 0.0)
    rec.setdefault("include_wrap", False)
    rec.setdefault("crosstalk_correction", bank.get("crosstalk_floor_db") is not None)
    rec.setdefault("theta_jitter_rad", 0.0)
    rec.setdefault("ripple_channels", "center")
    cfg.setdefault("noise", {}).setdefault("std_w", 0.0)
    return cfg


# -- model construction ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Models:
    spectrum: Spectrum
    ring: RingModel
    bank: Any
    schedule: ScanSchedule
    policy: HandoverPolicy
    heater: HeaterModel


def build_models(cfg: dict) -> Models:
    """Construct and cross-check every model; any inconsistency raises ConfigError."""
    try:
        g = cfg["grid"]
        grid = make_grid(g["start_hz"], g["stop_hz"], g["step_hz"])
        spectrum = _build_spectrum(cfg["input"], grid)
        ring = _build_ring(cfg["ring"])
        bank = _build_bank(cfg["bank"])
        schedule = _build_schedule(cfg["schedule"], bank.M)
        rc = cfg["reconstruction"]
        policy = HandoverPolicy(rc["handover_shift_deg"], rc["include_wrap"])
        h = cfg["ring"]["heater"]
        heater = HeaterModel(h["R_ohm"], h["k_rad_per_w"], h["theta0_rad"])
    except ConfigError:
        raise
    except (ValueError, KeyError, IndexError, TypeError, OSError) as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from None
    _cross_check(cfg, grid, ring, bank, schedule)
    return Models(spectrum, ring, bank, schedule, policy, heater)


def _build_spectrum(inp: dict, grid) -> Spectrum:
    kind = inp["kind"]
    if kind == "zero":
        spec = zero_spectrum(grid)
    elif kind == "flat":
        spec = flat_spectrum(grid, inp["level_w_per_hz"])
        if inp.get("band_hz"):
            lo, hi = inp["band_hz"]
            f = grid.frequencies
            spec = Spectrum(grid, np.where((f >= lo) & (f <= hi), inp["level_w_per_hz"], 0.0))
    elif kind == "wdm":
        chans = [WdmChannel(c["center_hz"], c["bandwidth_hz"], c["level_w_per_hz"], c["shape"])
                 for c in inp["channels"]]
        spec = wdm_spectrum(grid, chans)
    else:
        spec = load_spectrum(inp["path"], inp.get("lines_path"))
        if spec.grid != grid:
            raise ConfigError("input file grid differs from the scenario grid")
    if inp.get("lines"):
        lf = [ln["frequency_hz"] for ln in inp["lines"]]
        if not all(grid.start <= f <= grid.last for f in lf):
            raise ConfigError("input line outside the grid window")
        spec = spec.with_lines(lf, [ln["power_w"] for ln in inp["lines"]])
    return spec


def _build_ring(rc: dict) -> RingModel:
    template = RingModel(
        circumference=rc["circumference_m"],
        r1=rc.get("r1", 0.9),
        r2=rc.get("r2", rc.get("r1", 0.9)),
        f_ref=rc["f_ref_hz"],
        loss_db_per_cm=rc["loss_db_per_cm"],
        group_index_samples=tuple(tuple(s) for s in rc["group_index"]),
        loss_slope_db_per_cm_per_thz=rc["loss_slope_db_per_cm_per_thz"],
    )
    if "fwhm_target_hz" in rc:
        return calibrate_to_fwhm(rc["fwhm_target_hz"], template)
    return template


def _build_bank(bc: dict):
    if "smatrix_path" in bc:
        bank = import_smatrix(bc["smatrix_path"], bc["crosstalk_floor_db"])
        for key in ("M", "N"):
            if key in bc and bc[key] != getattr(bank, key):
                raise ConfigError(f"bank.{key}={bc[key]} but the S-matrix table has {getattr(bank, key)}")
        return bank
    p = bc["profile"]
    return AwgBank(
        M=bc["M"], N=bc["N"], spacing=bc["spacing_hz"], first_channel=bc["first_channel_hz"],
        profile=ChannelProfile(p["kind"], p["width_hz"], p["order"]),
        interlace_offsets=tuple(bc["interlace_offsets_hz"]), detune=tuple(bc["detune_hz"]),
        envelope_db=bc["envelope_db"], crosstalk_floor_db=bc["crosstalk_floor_db"],
        awg_fsr=bc["awg_fsr_hz"], split_ratio=bc["split_ratio"],
    )


def _build_schedule(sc: dict, bank_m: int) -> ScanSchedule:
    M = sc.get("M", bank_m)
    if M != bank_m:
        raise ConfigError(f"cross-check failed: schedule M={M} does not match bank M={bank_m}")
    if sc["mode"] == "time_multiplexed":
        return make_time_multiplexed_schedule(M, sc["theta_steps"], sc["handover_tolerance_deg"])
    if sc["handover_tolerance_deg"]:
        raise ConfigError("handover tolerance only applies to time-multiplexed schedules")
    return make_parallel_schedule(M, sc["theta_steps"])


def _cross_check(cfg, grid, ring, bank, schedule) -> None:
    if isinstance(bank, AwgBank):
        centers = np.array([bank.center(j, m) for j in range(bank.M) for m in range(bank.N)])
        if centers.min() < grid.start or centers.max() > grid.last:
            raise ConfigError(
                f"cross-check failed: grid [{grid.start:.6e}, {grid.last:.6e}] Hz does not cover the bank "
                f"channel centres [{centers.min():.6e}, {centers.max():.6e}] Hz")
    else:
        lo, hi = bank.frequency_span()
        if hi < grid.start or lo > grid.last:
            raise ConfigError("cross-check failed: S-matrix table does not overlap the grid")
    spacing = bank.spacing
    fsr = float(ring.fsr())
    tol = cfg["fsr_tolerance_hz"]
    if abs(fsr - spacing) > tol:
        raise ConfigError(
            f"cross-check failed: ring FSR {fsr / 1e9:.4f} GHz differs from AWG channel spacing "
            f"{spacing / 1e9:.4f} GHz by more than fsr_tolerance_hz={tol / 1e9:g} GHz")
    rc = cfg["reconstruction"]
    if schedule.mode == "time_multiplexed" and abs(rc["handover_shift_deg"]) > schedule.handover_tolerance_deg + 1e-9:
        raise ConfigError("handover shift exceeds the switch plan's tolerance window")


# -- dotted paths ------------------------------------------------------------------------

def _step(node, key: str):
    if isinstance(node, list):
        try:
            return int(key)
        except ValueError:
            raise ConfigError(f"path component {key!r} must index a list") from None
    return key


def get_path(cfg: dict, path: str):
    node = cfg
    for key in path.split("."):
        k = _step(node, key)
        try:
            node = node[k]
        except (KeyError, IndexError, TypeError):
            raise ConfigError(f"unknown parameter path {path!r}") from None
    return node


def set_path(cfg: dict, path: str, value, create: bool = False) -> None:
    keys = path.split(".")
    node = cfg
    for key in keys[:-1]:
        k = _step(node, key)
        if isinstance(node, dict) and k not in node and create:
            node[k] = {}
        try:
            node = node[k]
        except (KeyError, IndexError, TypeError):
            raise ConfigError(f"unknown parameter path {path!r}") from None
    last = _step(node, keys[-1])
    if isinstance(node, list):
        if not -len(node) <= last < len(node):
            raise ConfigError(f"unknown parameter path {path!r}")
    elif not isinstance(node, dict) or (last not in node and not create):
        raise ConfigError(f"unknown parameter path {path!r}")
    node[last] = value


# -- running -----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RunResult:
    metrics: dict
    ripple_rows: list
    trace: DetectorTrace
    virtual: list
    files: dict
    ripple_channels: list


def center_channel(bank, ring: RingModel, vts: Sequence[VirtualChannelTrace]) -> int:
    """Complete virtual channel whose AWG-1 centre lies nearest the ring reference."""
    full = [vt.m for vt in vts if not vt.partial.any()]
    if not full:
        raise ValueError("no virtual channel has complete coverage")
    return min(full, key=lambda m: (abs(float(bank.center(0, m)) - ring.f_ref), m))


def _ripple_rows(vts: Sequence[VirtualChannelTrace]) -> list[dict]:
    rows = []
    for vt in vts:
        if not vt.valid.any():
            continue
        row = {"virtual_channel": vt.m + 1, "ripple_db": ripple(vt).peak_to_peak_db,
               "partial": bool(vt.partial.any())}
        for name, win in (("first_half_db", (0.0, math.pi)), ("second_half_db", (math.pi, 2 * math.pi))):
            try:
                row[name] = ripple(vt, win).peak_to_peak_db
            except ValueError:
                row[name] = float("nan")
        rows.append(row)
    return rows


def execute(cfg: dict, models: Models | None = None, threads: int = 1) -> tuple:
    """Scan, optional crosstalk correction, synthesis and reconstruction, plus metrics."""
    models = models or build_models(cfg)
    trace = run_scan(models.spectrum, models.ring, models.bank, models.schedule,
                     threads=threads, noise_std=cfg["noise"]["std_w"], seed=cfg["seed"],
                     metadata=cfg)
    return trace, analyse(cfg, models, trace, threads)


def analyse(cfg: dict, models: Models, trace: DetectorTrace, threads: int = 1) -> dict:
    rc = cfg["reconstruction"]
    floor = getattr(models.bank, "crosstalk_floor_db", None)
    residual = None
    used = trace
    calib_bank = models.bank
    if rc["crosstalk_correction"] and floor is not None:
        used = crosstalk_correct(trace, floor)
        if isinstance(models.bank, AwgBank):
            # leakage is already subtracted, so calibrate against the leak-free passbands;
            # the same bank gives the reference reading for the residual
            calib_bank = replace(models.bank, crosstalk_floor_db=None)
            clean = run_scan(models.spectrum, models.ring, calib_bank, models.schedule, threads=threads,
                             check_grid=False)
            residual = crosstalk_residual_db(used.powers, clean.powers)
    vts = synthesize_all(used, models.policy)
    rec = calibrate_and_assemble(vts, models.ring, calib_bank, theta_jitter=rc["theta_jitter_rad"],
                                 seed=cfg["seed"] + _JITTER_SEED_OFFSET)
    rows = _ripple_rows(vts)
    sel = rc["ripple_channels"]
    if sel == "center":
        chosen = [center_channel(models.bank, models.ring, vts)]
    elif sel == "all":
        chosen = [vt.m for vt in vts if not vt.partial.any()]
    else:
        chosen = [m - 1 for m in sel]
    by_m = {r["virtual_channel"] - 1: r for r in rows}
    missing = [m + 1 for m in chosen if m not in by_m]
    if missing:
        raise ValueError(f"ripple channels {missing} have no complete samples")
    ripple_db = max(by_m[m]["ripple_db"] for m in chosen)
    rolloff = edge_rolloff(vts) if getattr(models.bank, "cyclic", False) else None
    if models.spectrum.psd.max() > 0:
        err = reconstruction_error(rec, models.spectrum, edge_margin=EDGE_MARGIN_FWHM * fwhm_analytic(models.ring))
        rms, worst = err.rms_db, err.max_db
    else:
        rms = worst = 0.0 if np.all(rec.psd == 0) else None
    metrics = metrics_record(cfg["scenario_id"], ripple_db, rolloff, rms, worst, residual)
    return {"metrics": metrics, "ripple_rows": rows, "virtual": vts, "reconstruction": rec,
            "ripple_channels": [m + 1 for m in chosen]}


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _write_ripple_csv(path: Path, rows: list[dict]) -> None:
    cols = ("virtual_channel", "ripple_db", "first_half_db", "second_half_db", "partial")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([r["virtual_channel"], repr(float(r["ripple_db"])), repr(float(r["first_half_db"])),
                        repr(float(r["second_half_db"])), int(r["partial"])])


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_bundle(cfg: dict, out: str | Path, threads: int = 1) -> RunResult:
    """Run one scenario config and write its artifact bundle into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    models = build_models(cfg)
    trace, res = execute(cfg, models, threads)
    files = {}
    _write_json(out / "config.json", cfg)
    save_trace(trace, out / "trace.csv", out / "trace.json")
    save_reconstruction(res["reconstruction"], out / "reconstruction.csv")
    _write_json(out / "metrics.json", res["metrics"])
    _write_ripple_csv(out / "ripple.csv", res["ripple_rows"])
    for name in ("config.json", "trace.csv", "trace.json", "reconstruction.csv", "metrics.json", "ripple.csv"):
        files[name] = _sha256_file(out / name)
    manifest = {
        "tool": "specmon",
        "version": __version__,
        "scenario_id": cfg["scenario_id"],
        "config_sha256": config_sha256(cfg),
        "seed": cfg["seed"],
        "ripple_channels": res["ripple_channels"],
        "files": files,
    }
    _write_json(out / "manifest.json", manifest)
    return RunResult(res["metrics"], res["ripple_rows"], trace, res["virtual"], files, res["ripple_channels"])


def _slug(value) -> str:
    text = json.dumps(value, sort_keys=True) if not isinstance(value, str) else value
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in text)[:40]


SWEEP_COLUMNS = ("index", "path", "value", "scenario_id", "ripple_db", "first_half_db", "second_half_db",
                 "edge_rolloff_db", "rms_error_db", "max_error_db", "crosstalk_residual_db")


def sweep(scenario: Scenario, path: str, values: Sequence, out: str | Path) -> list[dict]:
    """One bundle per value under ``out/NN_value`` plus ``sweep.csv`` / ``sweep.json``."""
    if not len(values):
        raise ConfigError("sweep needs at least one value")
    base = copy.deepcopy(scenario.config)
    base.pop("sweep", None)
    get_path(base, path)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, value in enumerate(values):
        cfg = copy.deepcopy(base)
        set_path(cfg, path, value)
        cfg["scenario_id"] = f"{base['scenario_id']}[{path}={value}]"
        _validate_schema(cfg)
        build_models(cfg)
        res = run_bundle(cfg, out / f"{i:02d}_{_slug(value)}", scenario.threads)
        by_m = {r["virtual_channel"]: r for r in res.ripple_rows}
        worst = max((by_m[m] for m in res.ripple_channels), key=lambda r: r["ripple_db"])
        rows.append({"index": i, "path": path, "value": value, **res.metrics,
                     "first_half_db": _finite(worst["first_half_db"]),
                     "second_half_db": _finite(worst["second_half_db"])})
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow(["" if r.get(c) is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                        for c in SWEEP_COLUMNS])
    _write_json(out / "sweep.json", {"scenario_id": base["scenario_id"], "path": path, "rows": rows})
    return rows


def _finite(v):
    return float(v) if math.isfinite(v) else None


def run_scenario(scenario: Scenario, out: str | Path):
    """``run`` entry point: a scenario carrying a ``sweep`` block runs the sweep."""
    if scenario.sweep:
        return sweep(scenario, scenario.sweep["path"], scenario.sweep["values"], out)
    return run_bundle(scenario.config, out, scenario.threads)
