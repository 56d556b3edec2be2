"""Frequency grids, sampled spectra and dB helpers shared by every module.

Frequency in Hz is the canonical axis throughout the package. Wavelength only
shows up at the I/O boundary through ``f = c / lambda``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

C = 299_792_458.0  # m/s

# C-band window, 1530-1565 nm
C_BAND_LO_HZ = C / 1565e-9
C_BAND_HI_HZ = C / 1530e-9

DEFAULT_GRID_STEP_HZ = 25e6

SHAPES = ("rectangular", "gaussian")


def wavelength_to_frequency(wavelength_m):
    return C / np.asarray(wavelength_m, dtype=float)


def frequency_to_wavelength(frequency_hz):
    return C / np.asarray(frequency_hz, dtype=float)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform frequency grid, inclusive of ``start``.

    ``count = floor((stop - start) / step) + 1``; the last sample may fall short
    of ``stop`` by less than one step.
    """

    start: float
    stop: float
    step: float
    count: int

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"grid step must be positive, got {self.step}")
        if not self.stop > self.start:
            raise ValueError(f"grid stop ({self.stop}) must exceed start ({self.start})")
        expected = _grid_count(self.start, self.stop, self.step)
        if self.count != expected:
            raise ValueError(f"grid count {self.count} inconsistent with span/step (expected {expected})")

    @property
    def frequencies(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)

    @property
    def span(self) -> float:
        return (self.count - 1) * self.step

    @property
    def last(self) -> float:
        return self.start + self.span

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.count, self.step)
        w[0] = w[-1] = 0.5 * self.step
        return w

    def contains(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        return (f >= self.start) & (f <= self.last)

    def refined(self, factor: int = 2) -> "FrequencyGrid":
        return make_grid(self.start, self.last, self.step / factor)


def _grid_count(start: float, stop: float, step: float) -> int:
    # tolerate float noise when (stop-start)/step is an integer
    n = (stop - start) / step
    return int(math.floor(n + 1e-9)) + 1


def make_grid(start: float, stop: float, step: float = DEFAULT_GRID_STEP_HZ) -> FrequencyGrid:
    if not step > 0:
        raise ValueError(f"grid step must be positive, got {step}")
    if not stop > start:
        raise ValueError(f"grid stop ({stop}) must exceed start ({start})")
    return FrequencyGrid(float(start), float(stop), float(step), _grid_count(start, stop, step))


@dataclass(frozen=True)
class Spectrum:
    """Sampled PSD (W/Hz) on a grid plus discrete monochromatic lines (Hz, W)."""

    grid: FrequencyGrid
    psd: np.ndarray
    line_frequencies: np.ndarray = field(default_factory=lambda: _frozen([]))
    line_powers: np.ndarray = field(default_factory=lambda: _frozen([]))

    def __post_init__(self):
        psd = _frozen(self.psd)
        lf = _frozen(np.atleast_1d(self.line_frequencies))
        lp = _frozen(np.atleast_1d(self.line_powers))
        if psd.shape != (self.grid.count,):
            raise ValueError(f"psd length {psd.size} does not match grid count {self.grid.count}")
        if not np.all(np.isfinite(psd)) or np.any(psd < 0):
            raise ValueError("psd must be finite and non-negative")
        if lf.shape != lp.shape:
            raise ValueError("line frequency and power arrays differ in length")
        if np.any(lp < 0) or not np.all(np.isfinite(lp)):
            raise ValueError("line powers must be finite and non-negative")
        object.__setattr__(self, "psd", psd)
        object.__setattr__(self, "line_frequencies", lf)
        object.__setattr__(self, "line_powers", lp)

    @property
    def frequencies(self) -> np.ndarray:
        return self.grid.frequencies

    def total_power(self) -> float:
        return float(np.dot(self.grid.trapezoid_weights(), self.psd) + self.line_powers.sum())

    def with_lines(self, frequencies: Sequence[float], powers: Sequence[float]) -> "Spectrum":
        lf = np.concatenate([self.line_frequencies, np.atleast_1d(np.asarray(frequencies, float))])
        lp = np.concatenate([self.line_powers, np.atleast_1d(np.asarray(powers, float))])
        return Spectrum(self.grid, self.psd, lf, lp)

    def scaled(self, alpha: float) -> "Spectrum":
        return Spectrum(self.grid, alpha * self.psd, self.line_frequencies, alpha * self.line_powers)

    def __add__(self, other: "Spectrum") -> "Spectrum":
        if other.grid != self.grid:
            raise ValueError("cannot add spectra on different grids")
        return Spectrum(
            self.grid,
            self.psd + other.psd,
            np.concatenate([self.line_frequencies, other.line_frequencies]),
            np.concatenate([self.line_powers, other.line_powers]),
        )


@dataclass(frozen=True)
class WdmChannel:
    center: float  # Hz
    bandwidth: float  # Hz; full width for rectangular, FWHM for gaussian
    level: float  # W/Hz
    shape: str = "rectangular"

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown channel shape {self.shape!r}; expected one of {SHAPES}")
        if self.bandwidth <= 0:
            raise ValueError("channel bandwidth must be positive")
        if self.level < 0:
            raise ValueError("channel psd level must be non-negative")

    def profile(self, f: np.ndarray) -> np.ndarray:
        d = f - self.center
        if self.shape == "rectangular":
            return np.where(np.abs(d) <= 0.5 * self.bandwidth, self.level, 0.0)
        return self.level * np.exp(-4.0 * math.log(2.0) * (d / self.bandwidth) ** 2)


def zero_spectrum(grid: FrequencyGrid) -> Spectrum:
    return Spectrum(grid, np.zeros(grid.count))


def flat_spectrum(grid: FrequencyGrid, level: float) -> Spectrum:
    return Spectrum(grid, np.full(grid.count, float(level)))


def wdm_spectrum(grid: FrequencyGrid, channels: Iterable[WdmChannel | tuple]) -> Spectrum:
    """Superpose channel profiles on ``grid``. Centers may sit anywhere (flex-grid)."""
    f = grid.frequencies
    psd = np.zeros(grid.count)
    for ch in channels:
        if not isinstance(ch, WdmChannel):
            ch = WdmChannel(*ch)
        if not (grid.start <= ch.center <= grid.last):
            raise ValueError(f"channel center {ch.center:.6e} Hz outside grid window")
        psd += ch.profile(f)
    return Spectrum(grid, psd)


def itu_channels(grid: FrequencyGrid, spacing: float, bandwidth: float, level: float,
                 anchor: float = 193.1e12, shape: str = "rectangular") -> list[WdmChannel]:
    """Channels on a fixed ITU-style grid, keeping every full channel inside ``grid``."""
    k_lo = math.ceil((grid.start + 0.5 * bandwidth - anchor) / spacing)
    k_hi = math.floor((grid.last - 0.5 * bandwidth - anchor) / spacing)
    return [WdmChannel(anchor + k * spacing, bandwidth, level, shape) for k in range(k_lo, k_hi + 1)]


# -- dB helpers -----------------------------------------------------------------

def db(linear):
    """10*log10 of a positive power ratio."""
    x = np.asarray(linear, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("db() is defined for strictly positive ratios only")
    out = 10.0 * np.log10(x)
    return float(out) if out.ndim == 0 else out


def lin(value_db):
    out = np.power(10.0, np.asarray(value_db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def db_floored(power, floor: float = 1e-15):
    """dB of powers floored at ``floor`` so dark detectors do not produce -inf."""
    return 10.0 * np.log10(np.maximum(np.asarray(power, dtype=float), floor))


# -- CSV I/O --------------------------------------------------------------------

def save_spectrum(spectrum: Spectrum, path: str | Path, lines_path: str | Path | None = None) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frequency_hz", "psd_w_per_hz"])
        for f, p in zip(spectrum.frequencies, spectrum.psd):
            w.writerow([repr(float(f)), repr(float(p))])
    if lines_path is not None:
        with Path(lines_path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frequency_hz", "power_w"])
            for f, p in zip(spectrum.line_frequencies, spectrum.line_powers):
                w.writerow([repr(float(f)), repr(float(p))])


def _read_two_columns(path: Path, header: tuple[str, str]) -> np.ndarray:
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(c.strip() for c in rows[0]) != header:
        raise ValueError(f"{path}: expected header {','.join(header)}")
    try:
        data = np.array([[float(a), float(b)] for a, b in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from None
    return data.reshape(-1, 2)


def load_spectrum(path: str | Path, lines_path: str | Path | None = None) -> Spectrum:
    data = _read_two_columns(Path(path), ("frequency_hz", "psd_w_per_hz"))
    if len(data) < 2:
        raise ValueError(f"{path}: need at least two samples")
    f = data[:, 0]
    step = (f[-1] - f[0]) / (len(f) - 1)
    if not np.allclose(np.diff(f), step, rtol=1e-6, atol=0):
        raise ValueError(f"{path}: frequency column is not uniformly spaced")
    grid = make_grid(f[0], f[-1], step)
    spec = Spectrum(grid, data[:, 1])
    if lines_path is not None:
        lines = _read_two_columns(Path(lines_path), ("frequency_hz", "power_w"))
        spec = spec.with_lines(lines[:, 0], lines[:, 1])
    return spec
