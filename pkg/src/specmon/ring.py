"""Tunable add-drop ring resonator: geometry to FSR, dispersion, drop-port comb.

Round-trip phase
----------------
The round-trip phase at zero tuning is the integral of the group index,

    phi0(f) = 2*pi*l/c * integral_{f_ref}^{f} n_g(f') df'

so that ``d(phi0)/df = 2*pi*l*n_g(f)/c`` and the local FSR is exactly
``c / (n_g(f) * l)``. The tuning phase ``theta`` is subtracted, which moves
every resonance to higher frequency as ``theta`` grows, and ``phi0(f_ref) = 0``
puts a resonance on ``f_ref`` at ``theta = 0``.

Drop-port power transmission (standard add-drop result)::

    |H|^2 = k1^2 k2^2 a / (1 - 2 r1 r2 a cos(phi) + (r1 r2 a)^2),   ki^2 = 1 - ri^2

evaluated with the denominator written as ``(1 - rho)^2 + 4 rho sin^2(phi/2)``,
which stays accurate as ``rho = r1 r2 a`` approaches one.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .core import C

# measured group index of the Si3N4 ring waveguide: (wavelength nm, n_g)
DEVICE_GROUP_INDEX = ((1530.0, 1.7725), (1545.0, 1.76841), (1565.0, 1.7629))
DEVICE_CIRCUMFERENCE_M = 3.3928e-3
DEVICE_LOSS_DB_PER_CM = 0.4
DEVICE_FWHM_HZ = 1.30e9
DEVICE_HEATER_OHMS = 734.0

# below this r1*r2*a the drop response never falls to half its peak
_RHO_MIN_HALF_POWER = 3.0 - 2.0 * math.sqrt(2.0)


def fsr_from_geometry(group_index: float, length: float) -> float:
    """Free spectral range ``c / (n_g * l)`` in Hz."""
    if not group_index >= 1.0:  # vacuum (n_g = 1) is allowed
        raise ValueError(f"group index must be at least 1, got {group_index}")
    if not length > 0:
        raise ValueError(f"ring length must be positive, got {length}")
    return C / (group_index * length)


def round_trip_amplitude(loss_db_per_cm: float, length: float) -> float:
    """Amplitude transmission per turn for a waveguide loss in dB/cm."""
    if loss_db_per_cm < 0:
        raise ValueError("loss must be non-negative")
    return 10.0 ** (-loss_db_per_cm * length * 100.0 / 20.0)


def airy(k, rho, phi):
    """Drop-port power ``k / (1 - 2 rho cos(phi) + rho^2)`` in cancellation-free form."""
    s = np.sin(0.5 * phi)
    return k / ((1.0 - rho) ** 2 + 4.0 * rho * s * s)


class _GroupIndexFit:
    """Polynomial n_g(lambda) through the samples, centred for conditioning."""

    def __init__(self, samples):
        samples = sorted((float(w), float(n)) for w, n in samples)
        if not samples:
            raise ValueError("need at least one group-index sample")
        lam = np.array([s[0] for s in samples])
        ng = np.array([s[1] for s in samples])
        self.lam_c = float(lam.mean())
        deg = min(2, len(samples) - 1)
        q = np.polyfit(lam - self.lam_c, ng, deg)[::-1] if deg else np.array([ng[0]])
        self.q = np.zeros(3)
        self.q[: len(q)] = q
        self.lam_lo, self.lam_hi = float(lam.min()), float(lam.max())
        # frequency window over which the fit is trusted
        self.f_lo = C / (self.lam_hi * 1e-9)
        self.f_hi = C / (self.lam_lo * 1e-9)
        self.constant = deg == 0

    def at_wavelength_nm(self, lam):
        u = np.asarray(lam, dtype=float) - self.lam_c
        return self.q[0] + self.q[1] * u + self.q[2] * u * u

    def at_frequency(self, f):
        f = np.asarray(f, dtype=float)
        if self.constant:
            return np.full(f.shape, self.q[0]) if f.ndim else float(self.q[0])
        fc = np.clip(f, self.f_lo, self.f_hi)
        return self.at_wavelength_nm(C * 1e9 / fc)

    def _integral_inside(self, f, f0):
        """integral_{f0}^{f} n_g df' for f, f0 inside the fit window (closed form)."""
        cp = C * 1e9  # lambda_nm = cp / f
        lc = self.lam_c
        q0, q1, q2 = self.q
        df = f - f0
        lg = np.log(f / f0)
        inv = (f0 - f) / (f * f0)  # 1/f - 1/f0
        return (q0 * df
                + q1 * (cp * lg - lc * df)
                + q2 * (-cp * cp * inv - 2.0 * cp * lc * lg + lc * lc * df))

    def integral(self, f, f0):
        """integral_{f0}^{f} n_g, extending n_g as a constant outside the window."""
        f = np.asarray(f, dtype=float)
        if self.constant:
            return self.q[0] * (f - f0)
        lo, hi = self.f_lo, self.f_hi
        f0c = min(max(f0, lo), hi)
        fc = np.clip(f, lo, hi)
        inside = self._integral_inside(fc, f0c)
        # constant extension beyond the window on either end
        tail = (np.where(f < lo, (f - lo) * self.at_frequency(lo), 0.0)
                + np.where(f > hi, (f - hi) * self.at_frequency(hi), 0.0))
        head = 0.0
        if f0 < lo:
            head = (lo - f0) * float(self.at_frequency(lo))
        elif f0 > hi:
            head = -(f0 - hi) * float(self.at_frequency(hi))
        return inside + tail + head


@dataclass(frozen=True)
class RingModel:
    """Add-drop ring with two couplers (self-coupling ``r1``, ``r2``).

    ``group_index_samples`` with a single entry gives a dispersion-free ring.
    ``loss_slope_db_per_cm_per_thz`` makes the waveguide loss vary linearly
    with frequency around ``f_ref``, which tilts peak transmission across the band.
    """

    circumference: float
    r1: float
    r2: float
    f_ref: float
    loss_db_per_cm: float = DEVICE_LOSS_DB_PER_CM
    group_index_samples: tuple = DEVICE_GROUP_INDEX
    loss_slope_db_per_cm_per_thz: float = 0.0

    def __post_init__(self):
        if not self.circumference > 0:
            raise ValueError("circumference must be positive")
        for name in ("r1", "r2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.loss_db_per_cm < 0:
            raise ValueError("loss must be non-negative")
        if not self.f_ref > 0:
            raise ValueError("f_ref must be positive")
        object.__setattr__(self, "group_index_samples",
                           tuple((float(w), float(n)) for w, n in self.group_index_samples))

    # -- constructors ---------------------------------------------------------

    @classmethod
    def for_fsr(cls, fsr: float, f_ref: float, r: float = 0.9, loss_db_per_cm: float = 0.0,
                group_index: float = 1.76841, **kw) -> "RingModel":
        """Dispersion-free ring whose FSR is exactly ``fsr``."""
        return cls(circumference=C / (group_index * fsr), r1=r, r2=r, f_ref=f_ref,
                   loss_db_per_cm=loss_db_per_cm,
                   group_index_samples=((1545.0, group_index),), **kw)

    def with_coupling(self, r1: float, r2: float | None = None) -> "RingModel":
        return replace(self, r1=r1, r2=r1 if r2 is None else r2)

    # -- dispersion -------------------------------------------------------------

    @cached_property
    def _fit(self) -> _GroupIndexFit:
        return _GroupIndexFit(self.group_index_samples)

    @property
    def dispersive(self) -> bool:
        return not self._fit.constant

    def group_index(self, f):
        return self._fit.at_frequency(f)

    def fsr(self, f=None):
        """Local FSR ``c / (n_g l)`` at ``f`` (defaults to ``f_ref``)."""
        f = self.f_ref if f is None else f
        return C / (self.group_index(f) * self.circumference)

    # -- loss -------------------------------------------------------------------

    def amplitude(self, f=None):
        """Round-trip amplitude a(f)."""
        f = self.f_ref if f is None else np.asarray(f, dtype=float)
        loss = self.loss_db_per_cm + self.loss_slope_db_per_cm_per_thz * (f - self.f_ref) / 1e12
        loss = np.maximum(loss, 0.0)
        return 10.0 ** (-loss * self.circumference * 100.0 / 20.0)

    def rho(self, f=None):
        return self.r1 * self.r2 * self.amplitude(f)

    def peak_transmission(self, f=None):
        a = self.amplitude(f)
        rho = self.r1 * self.r2 * a
        return (1 - self.r1**2) * (1 - self.r2**2) * a / (1 - rho) ** 2

    # -- phase & transmission ---------------------------------------------------

    def phase(self, f):
        """Round-trip phase at theta = 0, zero at ``f_ref``."""
        return 2.0 * math.pi * self.circumference / C * self._fit.integral(f, self.f_ref)

    def transmission_from_phase(self, phi, f=None):
        a = self.amplitude(f)
        rho = self.r1 * self.r2 * a
        k = (1 - self.r1**2) * (1 - self.r2**2) * a
        return airy(k, rho, phi)

    def drop_transmission(self, f, theta: float = 0.0):
        return self.transmission_from_phase(self.phase(f) - theta, f)

    def resonance_frequency(self, order, theta: float = 0.0):
        """Frequency where ``phase(f) - theta = 2*pi*order`` (Newton on the phase)."""
        target = 2.0 * math.pi * np.asarray(order, dtype=float) + np.asarray(theta, dtype=float)
        fsr0 = self.fsr()
        f = self.f_ref + target / (2.0 * math.pi) * fsr0
        for _ in range(50):
            err = self.phase(f) - target
            step = err / (2.0 * math.pi) * self.fsr(f)
            f = f - step
            if np.all(np.abs(step) < 1e-6):
                break
        return float(f) if np.ndim(f) == 0 else f

    def resonance_order_near(self, f) -> np.ndarray | int:
        k = np.rint(self.phase(f) / (2.0 * math.pi)).astype(int)
        return int(k) if np.ndim(k) == 0 else k

    def enbw(self, f=None):
        """Equivalent noise bandwidth of one resonance: integral of |H|^2 over one period.

        Closed form ``FSR * k1^2 k2^2 a / (1 - rho^2)``; for a lossless
        critically coupled ring this tends to (pi/2) * FWHM.
        """
        a = self.amplitude(f)
        rho = self.r1 * self.r2 * a
        k = (1 - self.r1**2) * (1 - self.r2**2) * a
        return self.fsr(f) * k / (1.0 - rho * rho)


def group_index(f, ring: RingModel | None = None):
    """Quadratic-in-wavelength n_g at frequency ``f``; clamps (with a warning) outside the samples."""
    fit = ring._fit if ring is not None else _GroupIndexFit(DEVICE_GROUP_INDEX)
    f_arr = np.asarray(f, dtype=float)
    if not fit.constant and np.any((f_arr < fit.f_lo * (1 - 1e-12)) | (f_arr > fit.f_hi * (1 + 1e-12))):
        warnings.warn("group_index: frequency outside the sampled band; clamping to band edge",
                      RuntimeWarning, stacklevel=2)
    return fit.at_frequency(f_arr)


def drop_transmission(f, theta: float, ring: RingModel):
    return ring.drop_transmission(f, theta)


def comb_resonance_frequency(m, theta: float, ring: RingModel):
    """Resonance ``m`` (m = 0 sits on ``f_ref`` at theta = 0) for tuning phase ``theta``."""
    return ring.resonance_frequency(m, theta)


class Linewidth(NamedTuple):
    fwhm: float
    finesse: float
    fsr: float
    resonance: float


def fwhm(ring: RingModel, order: int = 0) -> Linewidth:
    """Numerical half-power width of resonance ``order`` at theta = 0."""
    f_res = ring.resonance_frequency(order)
    fsr = float(ring.fsr(f_res))
    peak = float(ring.drop_transmission(f_res))

    def g(f):
        return float(ring.drop_transmission(f)) - 0.5 * peak

    half = 0.5 * fsr
    if g(f_res + half) > 0 or g(f_res - half) > 0:
        raise ValueError("resonance never drops to half power within one FSR (coupling too strong)")
    hi = brentq(g, f_res, f_res + half, xtol=1e-3, rtol=1e-15)
    lo = brentq(g, f_res - half, f_res, xtol=1e-3, rtol=1e-15)
    width = hi - lo
    return Linewidth(width, fsr / width, fsr, f_res)


def fwhm_analytic(ring: RingModel, f=None) -> float:
    """Small-linewidth approximation ``(1 - rho) FSR / (pi sqrt(rho))``."""
    rho = ring.rho(f)
    return float((1 - rho) * ring.fsr(f) / (math.pi * math.sqrt(rho)))


def calibrate_to_fwhm(target_fwhm: float, template: RingModel) -> RingModel:
    """Symmetric couplers ``r1 = r2 = r`` giving the requested FWHM for the template's loss."""
    a = float(template.amplitude())
    fsr = float(template.fsr())
    # keep rho = r^2 a clear of 1 so the on-resonance denominator stays representable
    r_hi = min(1.0 - 1e-12, math.sqrt((1.0 - 1e-9) / a))
    r_lo = math.sqrt(_RHO_MIN_HALF_POWER / a) * (1 + 1e-9)
    if r_lo >= 1.0:
        raise ValueError("ring loss too high for any half-power resonance")

    def width(r):
        return fwhm(template.with_coupling(r)).fwhm

    w_min = width(r_hi)
    if target_fwhm <= w_min:
        raise ValueError(
            f"target FWHM {target_fwhm / 1e9:.4g} GHz below the loss-limited minimum "
            f"{w_min / 1e9:.4g} GHz")
    w_max = width(r_lo)
    if target_fwhm >= min(w_max, fsr):
        raise ValueError(
            f"target FWHM {target_fwhm / 1e9:.4g} GHz not reachable; resonances broaden to at most "
            f"{w_max / 1e9:.4g} GHz before the comb loses its half-power points")
    r = brentq(lambda r: width(r) - target_fwhm, r_lo, r_hi, xtol=1e-14, rtol=1e-14)
    return template.with_coupling(r)


@dataclass(frozen=True)
class HeaterModel:
    """Thermo-optic heater: phase shift proportional to electrical power V^2/R."""

    resistance: float = DEVICE_HEATER_OHMS
    phase_coefficient: float = 2.0 * math.pi / 0.5  # rad/W; full FSR at 0.5 W by default
    phase_offset: float = 0.0

    def __post_init__(self):
        if not self.resistance > 0:
            raise ValueError("heater resistance must be positive")

    def power(self, voltage):
        return np.asarray(voltage, dtype=float) ** 2 / self.resistance

    def unwrapped_phase(self, voltage):
        return self.phase_coefficient * self.power(voltage) + self.phase_offset

    def voltage_for_phase(self, theta: float) -> float:
        dphi = (theta - self.phase_offset) % (2.0 * math.pi)
        return math.sqrt(dphi / self.phase_coefficient * self.resistance)


def heater_phase(voltage, h: HeaterModel):
    if np.any(np.asarray(voltage) < 0):
        raise ValueError("heater voltage must be non-negative")
    out = np.mod(h.unwrapped_phase(voltage), 2.0 * math.pi)
    return float(out) if np.ndim(out) == 0 else out


def device_ring(f_ref: float, fwhm_target: float = DEVICE_FWHM_HZ,
               circumference: float = DEVICE_CIRCUMFERENCE_M,
               loss_db_per_cm: float = DEVICE_LOSS_DB_PER_CM,
               group_index_samples=DEVICE_GROUP_INDEX) -> RingModel:
    """Dispersive Si3N4 ring with the measured geometry, calibrated to ``fwhm_target``."""
    template = RingModel(circumference=circumference, r1=0.9, r2=0.9, f_ref=f_ref,
                         loss_db_per_cm=loss_db_per_cm, group_index_samples=group_index_samples)
    return calibrate_to_fwhm(fwhm_target, template)
