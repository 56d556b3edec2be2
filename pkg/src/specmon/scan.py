"""Acquisition engine: sweep the ring tuning phase and record every AWG output.

Detected power for output (j, m) at tuning phase theta is the trapezoidal
integral of ``psd(f) * |H_ring(f, theta)|^2 * T_jm(f)`` plus the exact
contribution of every monochromatic line.

The engine stacks the channel responses (with trapezoid weights folded in)
into one sparse matrix and multiplies it against blocks of ring-weighted
spectra, one block of theta steps at a time. Blocks have a fixed size, so the
summation order inside every theta step is the same whatever the number of
worker threads.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core import Spectrum
from .ring import RingModel, airy, fwhm

DEFAULT_THETA_STEPS = 720
MODES = ("parallel", "time_multiplexed")
_CHUNK = 16
_TWO_PI = 2.0 * math.pi


class SwitchSegment(NamedTuple):
    """One step of the switch plan: ``ports`` are read while theta is in [lo, hi] (radians).

    ``start``/``stop`` are the nominal segment edges; ``lo``/``hi`` extend them by
    the handover tolerance (``lo`` may be negative and ``hi`` may exceed 2*pi,
    meaning the window wraps).
    """

    ports: tuple
    start: float
    stop: float
    lo: float
    hi: float

    def covers(self, theta) -> np.ndarray:
        width = self.hi - self.lo
        if width >= _TWO_PI:
            return np.ones(np.shape(theta), dtype=bool)
        return np.mod(np.asarray(theta) - self.lo, _TWO_PI) <= width + 1e-12


@dataclass(frozen=True)
class ScanSchedule:
    theta: np.ndarray
    M: int
    mode: str = "parallel"
    switch_plan: tuple = ()
    handover_tolerance_deg: float = 0.0

    def __post_init__(self):
        th = np.array(self.theta, dtype=float)
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)
        if self.mode not in MODES:
            raise ValueError(f"unknown scan mode {self.mode!r}")
        if th.ndim != 1 or th.size == 0:
            raise ValueError("schedule needs at least one theta step")
        if np.any(np.diff(th) <= 0) or th[0] < 0 or th[-1] >= _TWO_PI:
            raise ValueError("theta steps must be strictly increasing inside [0, 2*pi)")
        if self.mode == "time_multiplexed" and not self.switch_plan:
            raise ValueError("time-multiplexed schedule needs a switch plan")

    @property
    def steps(self) -> int:
        return self.theta.size

    def port_mask(self) -> np.ndarray:
        """Boolean (steps, M): which AWG input ports are read at each theta step."""
        if self.mode == "parallel":
            return np.ones((self.steps, self.M), dtype=bool)
        mask = np.zeros((self.steps, self.M), dtype=bool)
        for seg in self.switch_plan:
            hit = seg.covers(self.theta)
            for p in seg.ports:
                mask[hit, p] = True
        return mask

    def handover_angles(self) -> list[float]:
        return [_TWO_PI * j / self.M for j in range(1, self.M + 1)]


def uniform_theta(steps: int = DEFAULT_THETA_STEPS) -> np.ndarray:
    if steps < 1:
        raise ValueError("need at least one theta step")
    return _TWO_PI * np.arange(steps) / steps


def make_parallel_schedule(M: int, steps: int = DEFAULT_THETA_STEPS) -> ScanSchedule:
    return ScanSchedule(uniform_theta(steps), M, "parallel")


def max_handover_tolerance_deg(M: int) -> float:
    """Widest tolerance allowed: the two handover windows of a segment may cover
    at most one third of it (M=2: 30 deg, M=3: 20 deg)."""
    return 360.0 / M / 6.0


def make_time_multiplexed_schedule(M: int, steps: int = DEFAULT_THETA_STEPS,
                                   handover_tolerance_deg: float = 0.0) -> ScanSchedule:
    """Switch plan for a single M-input AWG behind a 1xM switch.

    Segment j covers [j, j+1] * 360/M degrees and reads ports j and j+1; the last
    segment reads port M and port 1 (whose channel m+1 closes the virtual channel).
    """
    if M < 2:
        raise ValueError("time multiplexing needs M >= 2")
    tol = float(handover_tolerance_deg)
    if tol < 0:
        raise ValueError("handover tolerance must be non-negative")
    limit = max_handover_tolerance_deg(M)
    if tol > limit + 1e-12:
        raise ValueError(f"handover tolerance {tol} deg too wide for M={M} (max {limit:g} deg); "
                         "neighbouring handover windows would overlap")
    seg = _TWO_PI / M
    t = math.radians(tol)
    plan = tuple(
        SwitchSegment(ports=(j, (j + 1) % M), start=j * seg, stop=(j + 1) * seg,
                      lo=j * seg - t, hi=(j + 1) * seg + t)
        for j in range(M)
    )
    return ScanSchedule(uniform_theta(steps), M, "time_multiplexed", plan, tol)


def describe_switch_plan(schedule: ScanSchedule) -> list[dict]:
    """Human-readable plan with 1-based ports and degrees."""
    out = []
    for seg in schedule.switch_plan:
        out.append({
            "ports": [p + 1 for p in seg.ports],
            "segment_deg": [round(math.degrees(seg.start), 9), round(math.degrees(seg.stop), 9)],
            "acquire_deg": [round(math.degrees(seg.lo), 9), round(math.degrees(seg.hi), 9)],
        })
    return out


@dataclass(frozen=True, eq=False)
class DetectorTrace:
    """Detected powers indexed [theta step, awg, channel]; NaN where not acquired."""

    schedule: ScanSchedule
    powers: np.ndarray
    cyclic: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.array(self.powers, dtype=float)
        if p.ndim != 3 or p.shape[0] != self.schedule.steps or p.shape[1] != self.schedule.M:
            raise ValueError(f"powers shape {p.shape} inconsistent with schedule")
        if np.any(p[~np.isnan(p)] < 0):
            raise ValueError("detected powers must be non-negative")
        p.setflags(write=False)
        object.__setattr__(self, "powers", p)

    @property
    def theta(self) -> np.ndarray:
        return self.schedule.theta

    @property
    def M(self) -> int:
        return self.powers.shape[1]

    @property
    def N(self) -> int:
        return self.powers.shape[2]

    @property
    def populated(self) -> np.ndarray:
        return ~np.isnan(self.powers)

    def replace_powers(self, powers) -> "DetectorTrace":
        return DetectorTrace(self.schedule, powers, self.cyclic, dict(self.metadata))


def theta_resolution_hz(ring: RingModel, steps: int = DEFAULT_THETA_STEPS) -> float:
    """Comb translation per theta step."""
    return float(ring.fsr()) / steps


def detect_power(spectrum: Spectrum, ring: RingModel, bank, theta: float, j: int, m: int) -> float:
    """Single detector reading by direct trapezoidal integration on the full grid."""
    f = spectrum.frequencies
    integrand = spectrum.psd * ring.drop_transmission(f, theta) * bank.channel_response(f, j, m)
    total = float(np.trapezoid(integrand, f))
    if spectrum.line_powers.size:
        lf = spectrum.line_frequencies
        total += float(np.sum(spectrum.line_powers * ring.drop_transmission(lf, theta)
                              * bank.channel_response(lf, j, m)))
    return total


class _Engine:
    """Precomputed pieces shared read-only by the workers."""

    def __init__(self, spectrum: Spectrum, ring: RingModel, bank):
        f = spectrum.frequencies
        w = spectrum.grid.trapezoid_weights()
        active = np.flatnonzero(spectrum.psd > 0)
        self.M, self.N = bank.M, bank.N
        fa = f[active]
        self.src = spectrum.psd[active]
        self.phase = ring.phase(fa)
        self.k, self.rho = _ring_coeffs(ring, fa)
        self.A = bank.response_matrix(fa, w[active]).tocsr()
        lf = spectrum.line_frequencies
        self.line_p = spectrum.line_powers
        self.line_phase = ring.phase(lf)
        self.line_k, self.line_rho = _ring_coeffs(ring, lf)
        if lf.size:
            self.line_resp = np.stack([bank.channel_response(lf, j, m)
                                       for j in range(bank.M) for m in range(bank.N)])
        else:
            self.line_resp = np.zeros((bank.M * bank.N, 0))

    def rows_for(self, ports: np.ndarray) -> np.ndarray:
        return np.concatenate([np.arange(j * self.N, (j + 1) * self.N) for j in np.flatnonzero(ports)])

    def block(self, thetas: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Powers (len(rows), len(thetas)) for the selected detector rows."""
        out = np.zeros((rows.size, thetas.size))
        if self.src.size:
            ring_t = airy(self.k[:, None], self.rho[:, None], self.phase[:, None] - thetas[None, :])
            x = self.src[:, None] * ring_t
            a = self.A if rows.size == self.A.shape[0] else self.A[rows]
            out += a @ x
        if self.line_p.size:
            ring_l = airy(self.line_k[:, None], self.line_rho[:, None],
                          self.line_phase[:, None] - thetas[None, :])
            # explicit accumulation keeps the order independent of block shape
            for i in range(self.line_p.size):
                out += self.line_resp[rows, i][:, None] * (self.line_p[i] * ring_l[i])[None, :]
        return out


def _ring_coeffs(ring: RingModel, f):
    a = ring.amplitude(f) * np.ones(np.shape(f))
    rho = ring.r1 * ring.r2 * a
    k = (1 - ring.r1**2) * (1 - ring.r2**2) * a
    return k, rho


def check_grid_resolution(spectrum: Spectrum, ring: RingModel, factor: float = 16.0) -> None:
    width = fwhm(ring).fwhm
    if spectrum.grid.step > width / factor:
        raise ValueError(f"grid step {spectrum.grid.step / 1e6:.3g} MHz does not resolve the ring "
                         f"(need <= FWHM/{factor:g} = {width / factor / 1e6:.3g} MHz)")


def run_scan(spectrum: Spectrum, ring: RingModel, bank, schedule: ScanSchedule, *,
             threads: int = 1, noise_std: float = 0.0, seed: int | None = None,
             check_grid: bool = True, metadata: dict | None = None) -> DetectorTrace:
    """Acquire a full detector trace; time-multiplexed schedules only read the switched-in ports."""
    if schedule.M != bank.M:
        raise ValueError(f"schedule expects M={schedule.M} input ports but bank has M={bank.M}")
    if check_grid:
        check_grid_resolution(spectrum, ring)
    eng = _Engine(spectrum, ring, bank)
    mask = schedule.port_mask()
    powers = np.full((schedule.steps, bank.M, bank.N), np.nan)

    # group theta steps sharing the same port set, then cut into fixed-size blocks
    jobs = []
    keys = [tuple(row) for row in mask]
    for key in dict.fromkeys(keys):
        if not any(key):
            continue
        idx = np.array([i for i, k in enumerate(keys) if k == key])
        rows = eng.rows_for(np.array(key))
        for s in range(0, idx.size, _CHUNK):
            jobs.append((idx[s:s + _CHUNK], rows, np.array(key)))

    def work(job):
        idx, rows, ports = job
        return idx, ports, eng.block(schedule.theta[idx], rows)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(job) for job in jobs]
    for idx, ports, block in results:
        sel = np.flatnonzero(ports)
        powers[np.ix_(idx, sel, np.arange(bank.N))] = block.T.reshape(idx.size, sel.size, bank.N)

    np.maximum(powers, 0.0, out=powers)  # round-off below zero on dark detectors
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        noise = rng.normal(0.0, noise_std, powers.shape)
        powers = np.where(np.isnan(powers), np.nan, np.maximum(powers + noise, 0.0))
    return DetectorTrace(schedule, powers, cyclic=bool(getattr(bank, "cyclic", False)),
                         metadata=dict(metadata or {}))


# -- trace files ---------------------------------------------------------------------

TRACE_HEADER = ("theta_rad", "awg_index", "channel", "power_w")


def save_trace(trace: DetectorTrace, csv_path: str | Path, sidecar_path: str | Path | None = None) -> None:
    """Long-format CSV (1-based indices, acquired samples only) plus a JSON sidecar."""
    csv_path = Path(csv_path)
    sidecar_path = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
    p = trace.powers
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for s, th in enumerate(trace.theta):
            ths = repr(float(th))
            for j in range(trace.M):
                row = p[s, j]
                if np.isnan(row[0]):
                    continue
                for m in range(trace.N):
                    w.writerow([ths, j + 1, m + 1, repr(float(row[m]))])
    sched = trace.schedule
    side = {
        "M": trace.M,
        "N": trace.N,
        "cyclic": trace.cyclic,
        "mode": sched.mode,
        "theta_rad": [float(t) for t in sched.theta],
        "handover_tolerance_deg": sched.handover_tolerance_deg,
        "switch_plan": [{"ports": list(s.ports), "start": s.start, "stop": s.stop, "lo": s.lo, "hi": s.hi}
                        for s in sched.switch_plan],
        "config": trace.metadata,
    }
    sidecar_path.write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")


def load_trace(csv_path: str | Path, sidecar_path: str | Path | None = None) -> DetectorTrace:
    csv_path = Path(csv_path)
    sidecar_path = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
    side = json.loads(sidecar_path.read_text())
    plan = tuple(SwitchSegment(tuple(s["ports"]), s["start"], s["stop"], s["lo"], s["hi"])
                 for s in side["switch_plan"])
    sched = ScanSchedule(np.array(side["theta_rad"]), side["M"], side["mode"], plan,
                         side["handover_tolerance_deg"])
    index = {float(t): i for i, t in enumerate(sched.theta)}
    powers = np.full((sched.steps, side["M"], side["N"]), np.nan)
    with csv_path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_HEADER:
            raise ValueError(f"{csv_path}: expected header {','.join(TRACE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                s = index[float(row[0])]
                powers[s, int(row[1]) - 1, int(row[2]) - 1] = float(row[3])
            except (KeyError, ValueError, IndexError):
                raise ValueError(f"{csv_path}:{lineno}: bad trace row {row!r}") from None
    return DetectorTrace(sched, powers, cyclic=bool(side["cyclic"]), metadata=side.get("config", {}))
