"""Metrics on synthesised and reconstructed spectra."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Spectrum, db_floored
from .reconstruct import ReconstructedSpectrum, VirtualChannelTrace

POWER_FLOOR_W = 1e-15
METRIC_KEYS = ("scenario_id", "ripple_db", "edge_rolloff_db", "rms_error_db", "max_error_db",
               "crosstalk_residual_db")


@dataclass(frozen=True)
class RippleReport:
    peak_to_peak_db: float
    window: tuple
    segments: tuple = ()  # (lo, hi, peak-to-peak) per handover segment inside the window
    samples: int = 0
    config: dict = field(default_factory=dict)


def ripple(trace: VirtualChannelTrace, window: tuple | None = None, floor: float = POWER_FLOOR_W,
           config: dict | None = None) -> RippleReport:
    """Peak-to-peak level (dB) over theta in [lo, hi), ignoring partial samples."""
    lo, hi = (0.0, 2.0 * math.pi) if window is None else (float(window[0]), float(window[1]))
    if not hi > lo:
        raise ValueError("empty theta window")
    sel = (trace.theta >= lo) & (trace.theta < hi) & trace.valid
    if not sel.any():
        raise ValueError("no complete samples inside the theta window")
    level = db_floored(trace.power, floor)
    p2p = float(level[sel].max() - level[sel].min())
    edges = [lo] + [b for b in trace.handover_angles if lo < b < hi] + [hi]
    segs = []
    for a, b in zip(edges[:-1], edges[1:]):
        s = sel & (trace.theta >= a) & (trace.theta < b)
        if s.any():
            segs.append((a, b, float(level[s].max() - level[s].min())))
    return RippleReport(p2p, (lo, hi), tuple(segs), int(sel.sum()), dict(config or {}))


def channel_levels_db(traces: Sequence[VirtualChannelTrace], floor: float = POWER_FLOOR_W) -> np.ndarray:
    """Mean dB level of each virtual channel over its complete samples."""
    out = []
    for vt in traces:
        ok = vt.valid
        out.append(float(np.mean(db_floored(vt.power[ok], floor))) if ok.any() else float("nan"))
    return np.array(out)


def edge_rolloff(traces: Sequence[VirtualChannelTrace], floor: float = POWER_FLOOR_W) -> float:
    """Centre-channel level minus the mean of the two outermost channels (dB).

    Expects one trace per channel of one AWG FSR, in channel order.
    """
    levels = channel_levels_db(traces, floor)
    if levels.size < 3:
        raise ValueError("edge roll-off needs at least three channels")
    centre = levels[(levels.size - 1) // 2] if levels.size % 2 else 0.5 * (
        levels[levels.size // 2 - 1] + levels[levels.size // 2])
    return float(centre - 0.5 * (levels[0] + levels[-1]))


@dataclass(frozen=True)
class ErrorReport:
    rms_db: float
    max_db: float
    per_channel: dict  # virtual channel -> (rms dB, max dB, points)
    points: int


def reconstruction_error(rec: ReconstructedSpectrum, truth: Spectrum,
                         relative_floor: float = 1e-3, edge_margin: float = 0.0) -> ErrorReport:
    """dB error of the reconstruction against the true PSD interpolated at its points.

    Partial samples and points where the truth is below ``relative_floor`` of its
    maximum (dark spectrum, where a dB error is meaningless) are masked, as are
    points within ``edge_margin`` Hz of the truth window, where the resonance
    tail runs off the simulated band.
    """
    f = truth.frequencies
    inside = (rec.frequency >= f[0] + edge_margin) & (rec.frequency <= f[-1] - edge_margin)
    if not inside.any():
        raise ValueError("reconstruction and truth do not overlap")
    t = np.interp(rec.frequency, f, truth.psd)
    peak = float(truth.psd.max())
    mask = inside & ~rec.partial
    if peak > 0:
        mask &= t > relative_floor * peak
    if not mask.any():
        return ErrorReport(0.0, 0.0, {}, 0)
    scale = peak if peak > 0 else 1.0
    err = (db_floored(rec.psd[mask] / scale, POWER_FLOOR_W)
           - db_floored(t[mask] / scale, POWER_FLOOR_W))
    per = {}
    ch = rec.channel[mask]
    for m in np.unique(ch):
        e = err[ch == m]
        per[int(m)] = (float(np.sqrt(np.mean(e * e))), float(np.max(np.abs(e))), int(e.size))
    return ErrorReport(float(np.sqrt(np.mean(err * err))), float(np.max(np.abs(err))), per, int(err.size))


def band_power(freq: np.ndarray, psd: np.ndarray, lo: float, hi: float) -> float:
    """Trapezoidal integral of sampled psd over [lo, hi] with linear end interpolation."""
    freq = np.asarray(freq, dtype=float)
    psd = np.asarray(psd, dtype=float)
    inner = (freq > lo) & (freq < hi)
    x = np.concatenate([[lo], freq[inner], [hi]])
    y = np.concatenate([[np.interp(lo, freq, psd)], psd[inner], [np.interp(hi, freq, psd)]])
    return float(np.trapezoid(y, x))


def channel_powers(rec: ReconstructedSpectrum, bands: Sequence[tuple]) -> np.ndarray:
    """Power recovered in each (lo, hi) band."""
    return np.array([band_power(rec.frequency, rec.psd, lo, hi) for lo, hi in bands])


def half_power_edges(freq: np.ndarray, psd: np.ndarray, lo: float, hi: float) -> tuple:
    """-3 dB crossings of the feature in [lo, hi] relative to its median in-band top."""
    sel = (freq >= lo) & (freq <= hi)
    f, p = freq[sel], psd[sel]
    top = float(np.median(p[p >= 0.5 * p.max()]))
    above = np.flatnonzero(p >= 0.5 * top)
    i0, i1 = above[0], above[-1]

    def cross(a, b):
        return f[a] + (0.5 * top - p[a]) * (f[b] - f[a]) / (p[b] - p[a])

    left = cross(i0 - 1, i0) if i0 > 0 else f[0]
    right = cross(i1, i1 + 1) if i1 < f.size - 1 else f[-1]
    return float(left), float(right)


def crosstalk_residual_db(measured: np.ndarray, clean: np.ndarray, floor: float = POWER_FLOOR_W) -> float:
    """Worst residual leakage relative to the strongest clean reading (dB).

    ``measured`` and ``clean`` are detector arrays of equal shape; NaN entries
    (not acquired) are ignored.
    """
    ok = ~(np.isnan(measured) | np.isnan(clean))
    ref = float(np.max(clean[ok]))
    if ref <= 0:
        return float("-inf")
    resid = float(np.max(np.abs(measured[ok] - clean[ok])))
    return float(10.0 * math.log10(max(resid, floor * ref) / ref))


def metrics_record(scenario_id: str, ripple_db=None, edge_rolloff_db=None, rms_error_db=None,
                   max_error_db=None, crosstalk_residual_db=None) -> dict:
    def clean(v):
        if v is None:
            return None
        v = float(v)
        return v if math.isfinite(v) else None

    return {
        "scenario_id": scenario_id,
        "ripple_db": clean(ripple_db),
        "edge_rolloff_db": clean(edge_rolloff_db),
        "rms_error_db": clean(rms_error_db),
        "max_error_db": clean(max_error_db),
        "crosstalk_residual_db": clean(crosstalk_residual_db),
    }
