"""Small-band setups for ripple, handover and detuning studies.

A handful of channels around 193.1 THz with flat input and a dispersion-free
ring whose FSR equals the AWG channel spacing. The middle virtual channel is
far enough from the band edges that every comb line reaching its detectors is
inside the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .awg import AwgBank, ChannelProfile
from .core import Spectrum, flat_spectrum, make_grid
from .reconstruct import HandoverPolicy, VirtualChannelTrace, synthesize
from .ring import DEVICE_FWHM_HZ, DEVICE_LOSS_DB_PER_CM, RingModel, calibrate_to_fwhm
from .scan import (DEFAULT_THETA_STEPS, DetectorTrace, make_parallel_schedule,
                   make_time_multiplexed_schedule, run_scan)


@dataclass(frozen=True)
class BandSetup:
    M: int = 2
    spacing: float = 50e9
    profile: ChannelProfile = ChannelProfile("raised_cosine", 25e9)
    offsets: tuple | None = None
    n_channels: int = 7
    center: float = 193.1e12
    fwhm: float = DEVICE_FWHM_HZ
    loss_db_per_cm: float = DEVICE_LOSS_DB_PER_CM
    grid_step: float = 25e6
    theta_steps: int = DEFAULT_THETA_STEPS
    psd_level: float = 1e-12  # W/Hz
    crosstalk_floor_db: float | None = None

    # -- presets ------------------------------------------------------------------

    @classmethod
    def fig2(cls, width: float = 25e9, kind: str = "gaussian") -> "BandSetup":
        """M=2 ripple versus passband width."""
        return cls(M=2, spacing=50e9, profile=ChannelProfile(kind, width))

    @classmethod
    def fig4(cls, width: float = 17e9, kind: str = "raised_cosine") -> "BandSetup":
        """M=3 on a 51 GHz grid with 17 GHz interlace."""
        return cls(M=3, spacing=51e9, profile=ChannelProfile(kind, width))

    @classmethod
    def fig13(cls) -> "BandSetup":
        """M=2 with 20 GHz Gaussian channels, for inter-AWG shift studies."""
        return cls(M=2, spacing=50e9, profile=ChannelProfile("gaussian", 20e9))

    def with_offsets(self, offsets) -> "BandSetup":
        return replace(self, offsets=tuple(float(o) for o in offsets))

    def with_width(self, width: float) -> "BandSetup":
        return replace(self, profile=replace(self.profile, width=float(width)))

    # -- models -------------------------------------------------------------------

    @property
    def first_channel(self) -> float:
        return self.center - (self.n_channels // 2) * self.spacing

    @property
    def middle(self) -> int:
        """Virtual channel used for single-channel metrics."""
        return self.n_channels // 2 - 1 if self.n_channels % 2 == 0 else self.n_channels // 2

    @cached_property
    def bank(self) -> AwgBank:
        return AwgBank(M=self.M, N=self.n_channels, spacing=self.spacing, first_channel=self.first_channel,
                       profile=self.profile, interlace_offsets=self.offsets,
                       crosstalk_floor_db=self.crosstalk_floor_db)

    @cached_property
    def ring(self) -> RingModel:
        template = RingModel.for_fsr(self.spacing, f_ref=self.first_channel, r=0.9,
                                     loss_db_per_cm=self.loss_db_per_cm)
        return calibrate_to_fwhm(self.fwhm, template)

    @cached_property
    def spectrum(self) -> Spectrum:
        lo = self.first_channel - self.spacing
        hi = self.first_channel + self.n_channels * self.spacing
        return flat_spectrum(make_grid(lo, hi, self.grid_step), self.psd_level)

    def trace(self, spectrum: Spectrum | None = None, time_multiplexed: bool = False,
              tolerance_deg: float = 0.0, threads: int = 1) -> DetectorTrace:
        sched = (make_time_multiplexed_schedule(self.M, self.theta_steps, tolerance_deg) if time_multiplexed
                 else make_parallel_schedule(self.M, self.theta_steps))
        return run_scan(spectrum if spectrum is not None else self.spectrum, self.ring, self.bank, sched,
                        threads=threads)

    @cached_property
    def flat_trace(self) -> DetectorTrace:
        return self.trace()

    def virtual_channel(self, policy: HandoverPolicy = HandoverPolicy(), m: int | None = None) -> VirtualChannelTrace:
        return synthesize(self.flat_trace, self.middle if m is None else m, policy)


def flat_ripple_db(setup: BandSetup) -> float:
    from .analysis import ripple

    return ripple(setup.virtual_channel()).peak_to_peak_db


def tracked_line_powers(bank: AwgBank, m: int, steps: int = DEFAULT_THETA_STEPS) -> np.ndarray:
    """Pair-sum response seen by a unit line that sits on the tracked resonance at every step.

    With an ideal comb (unit peak, no leakage from other orders) this is the
    virtual channel's passband shape.
    """
    from .awg import segment_pair

    theta = 2.0 * math.pi * np.arange(steps) / steps
    f = bank.center(0, m) + theta / (2.0 * math.pi) * bank.spacing
    out = np.zeros(steps)
    seg = np.minimum((theta / (2.0 * math.pi / bank.M)).astype(int), bank.M - 1)
    for s in range(bank.M):
        sel = seg == s
        pair = segment_pair(s, m, bank.M)
        for j, ch in pair.members():
            out[sel] += bank.channel_response(f[sel], j, ch)
    return out
