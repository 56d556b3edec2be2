"""Virtual-AWG channel synthesis and spectrum reconstruction.

Virtual channel ``m`` follows one ring resonance across a full tuning period.
During segment ``s`` of ``M`` equal segments the detected powers of
``(AWG s, ch m)`` and ``(AWG s+1, ch m)`` are summed; the last segment pairs
``(AWG M, ch m)`` with ``(AWG 1, ch m+1)``. For raised-cosine channels with
width ``spacing/M`` each pair sums to a flat passband.

Reconstruction maps every (m, theta) sample to the tracked resonance frequency
and divides by the pair's summed response at that frequency times the ring's
equivalent noise bandwidth, giving a PSD estimate in W/Hz.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .awg import ChannelPair, pair_sum_response, segment_pair
from .ring import RingModel
from .scan import DetectorTrace

MAX_HANDOVER_SHIFT_DEG = 30.0
_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class HandoverPolicy:
    """Where the synthesis switches from one channel pair to the next.

    ``shift_deg`` moves every interior segment boundary (180 deg for M=2;
    120/240 deg for M=3). With ``include_wrap`` the 0/360 deg boundary moves too,
    handing the end of the period to the next virtual channel's first pair.
    """

    shift_deg: float = 0.0
    include_wrap: bool = False

    def __post_init__(self):
        if abs(self.shift_deg) > MAX_HANDOVER_SHIFT_DEG:
            raise ValueError(f"handover shift limited to +-{MAX_HANDOVER_SHIFT_DEG:g} deg")

    @classmethod
    def at(cls, first_boundary_deg: float, M: int, include_wrap: bool = False) -> "HandoverPolicy":
        """Policy whose first interior handover sits at ``first_boundary_deg``."""
        return cls(first_boundary_deg - 360.0 / M, include_wrap)

    def boundaries(self, M: int) -> np.ndarray:
        """M+1 boundaries in radians, b[0] <= ... <= b[M]."""
        s = math.radians(self.shift_deg)
        b = np.array([_TWO_PI * j / M for j in range(M + 1)])
        b[1:M] += s
        if self.include_wrap:
            b[0] += s
            b[M] += s
        return b


# presets quoted for the two canonical architectures
PRESET_TOLERANCE_DEG = {2: 15.0, 3: 20.0}


def _segments(theta: np.ndarray, M: int, policy: HandoverPolicy):
    """Per theta: (segment index, channel offset -1/0/+1)."""
    b = policy.boundaries(M)
    seg = np.searchsorted(b[1:M], theta, side="right")
    dm = np.zeros(theta.shape, dtype=int)
    before = theta < b[0]
    after = theta >= b[M]
    seg[before], dm[before] = M - 1, -1
    seg[after], dm[after] = 0, 1
    return seg, dm


@dataclass(frozen=True, eq=False)
class VirtualChannelTrace:
    """Synthesised power of virtual channel ``m`` at each theta step.

    ``pairs`` holds the logical (awg_a, ch_a, awg_b, ch_b) summed at each step;
    ``partial`` marks steps where a member was absent (band edge or not acquired).
    """

    m: int
    theta: np.ndarray
    power: np.ndarray
    pairs: np.ndarray
    partial: np.ndarray
    M: int
    handover_angles: tuple

    def pair(self, i: int) -> ChannelPair:
        return ChannelPair(*(int(v) for v in self.pairs[i]))

    @property
    def valid(self) -> np.ndarray:
        return ~self.partial & np.isfinite(self.power)


def _resolve_channels(ch: np.ndarray, N: int, cyclic: bool):
    if cyclic:
        return np.mod(ch, N), np.ones(ch.shape, dtype=bool)
    ok = (ch >= 0) & (ch < N)
    return np.clip(ch, 0, N - 1), ok


def synthesize(trace: DetectorTrace, m: int, policy: HandoverPolicy = HandoverPolicy()) -> VirtualChannelTrace:
    """Sum the interlaced pair named by the (possibly shifted) handover policy at every theta step."""
    M, N = trace.M, trace.N
    if M < 2:
        raise ValueError("synthesis needs at least two interlaced AWGs")
    if not 0 <= m < N:
        raise IndexError(f"virtual channel {m} outside 0..{N - 1}")
    theta = trace.theta
    seg, dm = _segments(theta, M, policy)
    last = seg == M - 1
    awg_a, awg_b = seg, np.where(last, 0, seg + 1)
    ch_a = m + dm
    ch_b = ch_a + last.astype(int)
    steps = np.arange(theta.size)
    total = np.zeros(theta.size)
    missing = np.zeros(theta.size, dtype=bool)
    n_ok = np.zeros(theta.size, dtype=int)
    for awg, ch in ((awg_a, ch_a), (awg_b, ch_b)):
        idx, ok = _resolve_channels(ch, N, trace.cyclic)
        val = trace.powers[steps, awg, idx]
        ok = ok & ~np.isnan(val)
        total += np.where(ok, val, 0.0)
        n_ok += ok
        missing |= ~ok
    total[n_ok == 0] = np.nan
    pairs = np.stack([awg_a, ch_a, awg_b, ch_b], axis=1)
    return VirtualChannelTrace(m, theta.copy(), total, pairs, missing, M,
                               tuple(float(x) for x in policy.boundaries(M)[1:M]))


def synthesize_all(trace: DetectorTrace, policy: HandoverPolicy = HandoverPolicy(),
                   channels: Sequence[int] | None = None) -> list[VirtualChannelTrace]:
    chans = range(trace.N) if channels is None else channels
    return [synthesize(trace, m, policy) for m in chans]


def handover_sensitivity(trace: DetectorTrace, m: int, angle_a_deg: float, angle_b_deg: float) -> float:
    """Largest |difference| in dB between two handover angles (first interior boundary)."""
    va = synthesize(trace, m, HandoverPolicy.at(angle_a_deg, trace.M))
    vb = synthesize(trace, m, HandoverPolicy.at(angle_b_deg, trace.M))
    ok = va.valid & vb.valid & (va.power > 0) & (vb.power > 0)
    if not ok.any():
        return 0.0
    return float(np.max(np.abs(10.0 * np.log10(va.power[ok] / vb.power[ok]))))


def theta_to_frequency(m: int, theta, ring: RingModel, bank):
    """Frequency of the resonance tracked by virtual channel ``m`` at tuning phase ``theta``.

    The tracked resonance is the one sitting nearest AWG-1 channel ``m`` at theta = 0;
    its position follows the dispersive ring phase exactly.
    """
    order = ring.resonance_order_near(float(bank.center(0, m)))
    return ring.resonance_frequency(order, theta)


@dataclass(frozen=True, eq=False)
class ReconstructedSpectrum:
    frequency: np.ndarray
    psd: np.ndarray
    channel: np.ndarray
    theta: np.ndarray
    partial: np.ndarray
    calibration: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.frequency.size > 1 and np.any(np.diff(self.frequency) <= 0):
            raise ValueError("reconstruction frequencies must be strictly increasing")

    @property
    def flags(self) -> list[str]:
        return ["partial" if p else "" for p in self.partial]

    def coverage(self) -> list[tuple[float, float]]:
        """Frequency spans made of partial-coverage samples."""
        spans = []
        start = None
        for i, p in enumerate(self.partial):
            if p and start is None:
                start = i
            if not p and start is not None:
                spans.append((float(self.frequency[start]), float(self.frequency[i - 1])))
                start = None
        if start is not None:
            spans.append((float(self.frequency[start]), float(self.frequency[-1])))
        return spans

    def full(self) -> "ReconstructedSpectrum":
        keep = ~self.partial
        return ReconstructedSpectrum(self.frequency[keep], self.psd[keep], self.channel[keep],
                                     self.theta[keep], self.partial[keep], dict(self.calibration))


def calibrate_and_assemble(traces: Sequence[VirtualChannelTrace], ring: RingModel, bank, *,
                           theta_jitter: float = 0.0, seed: int | None = None) -> ReconstructedSpectrum:
    """PSD estimate = synthesised power / (pair response at the resonance * ring ENBW).

    ``theta_jitter`` (rad, std) perturbs the tuning phase the processor believes it
    applied, modelling an imperfect resonance-position reading.
    """
    rng = np.random.default_rng(seed) if theta_jitter else None
    freqs, psds, chans, thetas, partial = [], [], [], [], []
    for vt in traces:
        keep = np.isfinite(vt.power)
        th = vt.theta[keep]
        if rng is not None:
            th = th + rng.normal(0.0, theta_jitter, th.shape)
        f = np.atleast_1d(theta_to_frequency(vt.m, th, ring, bank))
        pairs = vt.pairs[keep]
        resp = np.zeros(f.size)
        uniq, inv = np.unique(pairs, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        for u, row in enumerate(uniq):
            sel = inv == u
            resp[sel] = pair_sum_response(f[sel], ChannelPair(*(int(v) for v in row)), bank)
        factor = resp * ring.enbw(f)
        part = vt.partial[keep]
        dead = ~(factor > 0)
        if np.any(dead & ~part):
            bad = f[dead & ~part][0]
            raise ValueError(f"zero calibration factor for virtual channel {vt.m} at {bad:.6e} Hz")
        # a band-edge sample whose only present member is blind carries no information
        use = ~dead
        freqs.append(f[use])
        psds.append(vt.power[keep][use] / factor[use])
        chans.append(np.full(int(use.sum()), vt.m))
        thetas.append(vt.theta[keep][use])
        partial.append(part[use])
    if not freqs:
        raise ValueError("no virtual-channel traces to assemble")
    f = np.concatenate(freqs)
    order = np.argsort(f, kind="stable")
    calib = {
        "method": "pair_sum_response * ring_enbw",
        "ring_enbw_hz_at_fref": float(ring.enbw()),
        "ring_peak_transmission_at_fref": float(ring.peak_transmission()),
        "theta_jitter_rad": float(theta_jitter),
    }
    return ReconstructedSpectrum(f[order], np.concatenate(psds)[order], np.concatenate(chans)[order],
                                 np.concatenate(thetas)[order], np.concatenate(partial)[order], calib)


RECON_HEADER = ("frequency_hz", "psd_w_per_hz", "virtual_channel", "theta_rad", "flags")


def save_reconstruction(rec: ReconstructedSpectrum, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECON_HEADER)
        for f, p, m, th, fl in zip(rec.frequency, rec.psd, rec.channel, rec.theta, rec.flags):
            w.writerow([repr(float(f)), repr(float(p)), int(m) + 1, repr(float(th)), fl])


def load_reconstruction(path: str | Path) -> ReconstructedSpectrum:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != RECON_HEADER:
        raise ValueError(f"{path}: expected header {','.join(RECON_HEADER)}")
    body = rows[1:]
    return ReconstructedSpectrum(
        np.array([float(r[0]) for r in body]), np.array([float(r[1]) for r in body]),
        np.array([int(r[2]) - 1 for r in body]), np.array([float(r[3]) for r in body]),
        np.array(["partial" in r[4] for r in body], dtype=bool))


def crosstalk_correct(trace: DetectorTrace, crosstalk_floor_db: float | None) -> DetectorTrace:
    """Single-pass subtraction of floor-scaled neighbour readings, clamped at zero.

    corrected[ch] = measured[ch] - x * (measured[ch-1] + measured[ch+1]) within
    each AWG, with x the linear adjacent-crosstalk floor.
    """
    if crosstalk_floor_db is None or np.isneginf(crosstalk_floor_db):
        return trace.replace_powers(trace.powers.copy())
    x = 10.0 ** (crosstalk_floor_db / 10.0)
    p = trace.powers
    if trace.cyclic:
        neighbours = np.roll(p, 1, axis=2) + np.roll(p, -1, axis=2)
    else:
        neighbours = np.zeros_like(p)
        neighbours[:, :, 1:] += p[:, :, :-1]
        neighbours[:, :, :-1] += p[:, :, 1:]
    corrected = np.maximum(p - x * neighbours, 0.0)
    corrected[np.isnan(p)] = np.nan
    return trace.replace_powers(corrected)


@dataclass(frozen=True)
class DetuningReport:
    shift_hz: float
    ripple_first_half_db: float
    ripple_second_half_db: float
    total_ripple_db: float

    @property
    def asymmetry_db(self) -> float:
        return abs(self.ripple_first_half_db - self.ripple_second_half_db)


def detuning_study(shift_hz: float, config=None) -> DetuningReport:
    """Run the M=2 pipeline with AWG-2 offset by ``shift_hz`` and report ripple per half-scan."""
    from .analysis import ripple
    from .experiments import BandSetup

    cfg = config if config is not None else BandSetup.fig13()
    if cfg.M != 2:
        raise ValueError("detuning study is defined for the two-AWG architecture")
    setup = cfg.with_offsets((0.0, shift_hz))
    vt = setup.virtual_channel()
    first = ripple(vt, (0.0, math.pi)).peak_to_peak_db
    second = ripple(vt, (math.pi, _TWO_PI)).peak_to_peak_db
    total = ripple(vt).peak_to_peak_db
    return DetuningReport(float(shift_hz), first, second, total)
