"""Interlaced AWG filter banks (power-only model).

Channel ``m`` of AWG ``j`` is centred at ``f0 + m*spacing + offset_j + detune_j``.
Its response is a normalised profile (peak 1, half power at +-B/2) times an
optional FSR envelope, plus adjacent-channel leakage: copies of the
neighbouring channels' profiles scaled to the crosstalk floor.

Indices are 0-based here; reports print them 1-based (``Ch_{j+1, m+1}``).
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .core import lin

PROFILE_KINDS = ("raised_cosine", "gaussian", "supergaussian")
SMATRIX_HEADER = ("frequency_hz", "awg_index", "input_port", "output_channel", "transmission_db")
TABLE_FLOOR_DB = -80.0
# profile tails below this are dropped from the sparse detector matrix
_SUPPORT_FLOOR = 1e-13
_LN2 = math.log(2.0)


@dataclass(frozen=True)
class ChannelProfile:
    """Normalised channel power profile with -3 dB full width ``width``.

    raised_cosine: ``cos^2(pi*df / (2*width))`` on ``|df| <= width``. With
    ``width = spacing/M`` adjacent interlaced channels sum to exactly one.
    gaussian: ``2**-(2 df/width)**2``.
    supergaussian: ``2**-|2 df/width|**(2*order)``.
    """

    kind: str = "raised_cosine"
    width: float = 25e9
    order: float = 1.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}; expected one of {PROFILE_KINDS}")
        if not self.width > 0:
            raise ValueError("profile width must be positive")
        if not self.order > 0:
            raise ValueError("supergaussian order must be positive")

    def __call__(self, df):
        df = np.asarray(df, dtype=float)
        if self.kind == "raised_cosine":
            x = np.abs(df)
            return np.where(x <= self.width, np.cos(0.5 * math.pi * x / self.width) ** 2, 0.0)
        n = 1.0 if self.kind == "gaussian" else self.order
        return np.exp(-_LN2 * np.abs(2.0 * df / self.width) ** (2.0 * n))

    def support_halfwidth(self, floor: float = _SUPPORT_FLOOR) -> float:
        if self.kind == "raised_cosine":
            return self.width
        n = 1.0 if self.kind == "gaussian" else self.order
        return 0.5 * self.width * (math.log(1.0 / floor) / _LN2) ** (1.0 / (2.0 * n))


class ChannelPair(NamedTuple):
    """Two (awg, channel) detector indices summed into one virtual-channel sample."""

    awg_a: int
    ch_a: int
    awg_b: int
    ch_b: int

    def members(self):
        return ((self.awg_a, self.ch_a), (self.awg_b, self.ch_b))

    def label(self) -> str:
        return f"Ch{self.awg_a + 1},{self.ch_a + 1}+Ch{self.awg_b + 1},{self.ch_b + 1}"


def segment_pair(segment: int, m: int, M: int) -> ChannelPair:
    """Pair summed during tuning segment ``segment`` (0..M-1) for virtual channel ``m``."""
    if not 0 <= segment < M:
        raise ValueError(f"segment {segment} outside 0..{M - 1}")
    if segment < M - 1:
        return ChannelPair(segment, m, segment + 1, m)
    return ChannelPair(M - 1, m, 0, m + 1)


def interlaced_partner(theta: float, m: int, M: int) -> ChannelPair:
    """Channel pair for virtual channel ``m`` at tuning phase ``theta`` (exact segment edges).

    M=2: (1,m)+(2,m) on [0, pi), (2,m)+(1,m+1) on [pi, 2pi); M=3 splits into thirds,
    and so on for general M.
    """
    if M < 2:
        raise ValueError("need at least two interlaced AWGs")
    if not 0.0 <= theta < 2.0 * math.pi:
        raise ValueError("theta must lie in [0, 2*pi)")
    seg = min(int(theta / (2.0 * math.pi / M)), M - 1)
    return segment_pair(seg, m, M)


@dataclass(frozen=True)
class AwgBank:
    """``M`` interlaced copies of an ``N``-channel AWG (parametric profiles).

    ``interlace_offsets`` default to ``j * spacing / M``; ``detune`` adds a further
    per-AWG shift. ``awg_fsr`` makes the bank cyclic (responses periodic in f).
    ``split_ratio`` is the fraction of drop-port power reaching each AWG.
    """

    M: int
    N: int
    spacing: float
    first_channel: float
    profile: ChannelProfile = field(default_factory=ChannelProfile)
    interlace_offsets: tuple | None = None
    detune: tuple | None = None
    envelope_db: float = 0.0
    crosstalk_floor_db: float | None = None
    awg_fsr: float | None = None
    split_ratio: float = 1.0

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise ValueError("M and N must be positive")
        if not self.spacing > 0:
            raise ValueError("channel spacing must be positive")
        offsets = (tuple(j * self.spacing / self.M for j in range(self.M))
                   if self.interlace_offsets is None else tuple(float(o) for o in self.interlace_offsets))
        detune = (0.0,) * self.M if self.detune is None else tuple(float(d) for d in self.detune)
        if len(offsets) != self.M or len(detune) != self.M:
            raise ValueError("need one interlace offset and one detune value per AWG")
        object.__setattr__(self, "interlace_offsets", offsets)
        object.__setattr__(self, "detune", detune)
        if self.envelope_db < 0:
            raise ValueError("envelope roll-off is a loss in dB and must be >= 0")
        if self.awg_fsr is not None and self.awg_fsr < self.N * self.spacing * (1 - 1e-12):
            raise ValueError("AWG FSR shorter than N channel spacings")
        if not 0 < self.split_ratio <= 1:
            raise ValueError("split_ratio must lie in (0, 1]")

    # -- geometry -----------------------------------------------------------------

    @property
    def cyclic(self) -> bool:
        return self.awg_fsr is not None

    @property
    def crosstalk_ratio(self) -> float:
        return 0.0 if self.crosstalk_floor_db is None else lin(self.crosstalk_floor_db)

    @property
    def envelope_period(self) -> float:
        return self.awg_fsr if self.cyclic else self.N * self.spacing

    def center(self, j: int, m) -> float:
        return self.first_channel + np.asarray(m) * self.spacing + self.interlace_offsets[j] + self.detune[j]

    def resolve(self, j: int, m: int) -> int | None:
        """Physical channel index for (possibly out-of-range) ``m``; None if absent."""
        if not 0 <= j < self.M:
            return None
        if self.cyclic:
            return m % self.N
        return m if 0 <= m < self.N else None

    def _check(self, j: int, m: int):
        if not 0 <= j < self.M:
            raise IndexError(f"AWG index {j} outside 0..{self.M - 1}")
        if not 0 <= m < self.N:
            raise IndexError(f"channel index {m} outside 0..{self.N - 1}")

    def _offset(self, f, j, m):
        df = np.asarray(f, dtype=float) - self.center(j, m)
        if self.cyclic:
            p = self.awg_fsr
            df = df - p * np.floor(df / p + 0.5)
        return df

    def envelope(self, f, j: int = 0):
        if self.envelope_db == 0:
            return np.ones(np.shape(f))
        fc = self.center(j, 0.5 * (self.N - 1))
        s = np.sin(math.pi * (np.asarray(f, dtype=float) - fc) / self.envelope_period)
        return 10.0 ** (-self.envelope_db * s * s / 10.0)

    def _neighbour_shifts(self, m: int):
        out = []
        for dm in (-1, 1):
            if self.cyclic or 0 <= m + dm < self.N:
                out.append(dm * self.spacing)
        return out

    def channel_response(self, f, j: int, m: int):
        """Power transmission of output ``m`` of AWG ``j`` at frequency ``f``."""
        self._check(j, m)
        df = self._offset(f, j, m)
        t = self.profile(df)
        x = self.crosstalk_ratio
        if x:
            for shift in self._neighbour_shifts(m):
                t = t + x * self.profile(df - shift)
        return self.split_ratio * t * self.envelope(f, j)

    def support_halfwidth(self) -> float:
        hw = self.profile.support_halfwidth()
        return hw + self.spacing if self.crosstalk_ratio else hw

    def windows(self, j: int, m: int, f_lo: float, f_hi: float):
        """Frequency intervals in [f_lo, f_hi] where channel (j, m) can be non-zero."""
        hw = self.support_halfwidth()
        c = float(self.center(j, m))
        if not self.cyclic:
            lo, hi = max(c - hw, f_lo), min(c + hw, f_hi)
            return [(lo, hi)] if lo <= hi else []
        p = self.awg_fsr
        if 2 * hw >= p:
            return [(f_lo, f_hi)]
        k0 = math.floor((f_lo - c - hw) / p)
        k1 = math.ceil((f_hi - c + hw) / p)
        out = []
        for k in range(k0, k1 + 1):
            lo, hi = max(c + k * p - hw, f_lo), min(c + k * p + hw, f_hi)
            if lo <= hi:
                out.append((lo, hi))
        return out

    def response_matrix(self, freqs: np.ndarray, weights: np.ndarray | None = None) -> sp.csr_matrix:
        return _response_matrix(self, freqs, weights)

    def with_profile(self, **kw) -> "AwgBank":
        return replace(self, profile=replace(self.profile, **kw))


def _response_matrix(bank, freqs, weights):
    """Sparse (M*N, len(freqs)) matrix; row ``j*N + m`` holds weights * response."""
    freqs = np.asarray(freqs, dtype=float)
    n = freqs.size
    if n == 0:
        return sp.csr_matrix((bank.M * bank.N, 0))
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    f_lo, f_hi = float(freqs[0]), float(freqs[-1])
    indptr = [0]
    indices, data = [], []
    for j in range(bank.M):
        for m in range(bank.N):
            cols = []
            for lo, hi in bank.windows(j, m, f_lo, f_hi):
                a = np.searchsorted(freqs, lo, side="left")
                b = np.searchsorted(freqs, hi, side="right")
                cols.append(np.arange(a, b))
            idx = np.unique(np.concatenate(cols)) if cols else np.zeros(0, dtype=np.int64)
            vals = bank.channel_response(freqs[idx], j, m) * w[idx]
            keep = vals != 0
            indices.append(idx[keep])
            data.append(vals[keep])
            indptr.append(indptr[-1] + int(keep.sum()))
    return sp.csr_matrix((np.concatenate(data), np.concatenate(indices), np.array(indptr)),
                         shape=(bank.M * bank.N, n))


def pair_sum_response(f, pair: ChannelPair, bank) -> np.ndarray:
    """Incoherent sum of the two members' responses; absent members contribute nothing."""
    total = np.zeros(np.shape(f))
    for j, m in pair.members():
        mm = bank.resolve(j, m)
        if mm is not None:
            total = total + bank.channel_response(f, j, mm)
    return total


# -- canonical designs -------------------------------------------------------------

def table2_bank(first_channel: float, N: int = 88, profile: ChannelProfile | None = None, **kw) -> AwgBank:
    """Two AWGs, 50 GHz spacing, 20 GHz channels, 25 GHz interlace."""
    return AwgBank(M=2, N=N, spacing=50e9, first_channel=first_channel,
                   profile=profile or ChannelProfile("gaussian", 20e9), **kw)


def table3_bank(first_channel: float, N: int = 88, profile: ChannelProfile | None = None, **kw) -> AwgBank:
    """Three AWGs, 51 GHz spacing, 17 GHz channels, 17 GHz interlace."""
    return AwgBank(M=3, N=N, spacing=51e9, first_channel=first_channel,
                   profile=profile or ChannelProfile("raised_cosine", 17e9), **kw)


def table5_bank(first_channel: float, profile: ChannelProfile | None = None,
                envelope_db: float = 1.8, **kw) -> AwgBank:
    """Cyclic 32 x 50 GHz pair (1600 GHz FSR) with the edge roll-off of the designed device."""
    return AwgBank(M=2, N=32, spacing=50e9, first_channel=first_channel,
                   profile=profile or ChannelProfile("gaussian", 20e9),
                   envelope_db=envelope_db, awg_fsr=1600e9, **kw)


# -- tabulated (S-matrix) banks ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class TabulatedAwgBank:
    """Bank driven by imported power-transmission tables.

    Each distinct (awg_index, input_port) group in the table becomes one
    interlaced filter; responses interpolate linearly in power and fall to
    the -80 dB floor outside the tabulated span.
    """

    M: int
    N: int
    tables: dict = field(repr=False)  # (j, m) -> (freqs, power transmission)
    sources: tuple = ()  # (awg_index, input_port) per j, 1-based as in the file
    crosstalk_floor_db: float | None = None
    floor: float = lin(TABLE_FLOOR_DB)

    cyclic = False

    def _check(self, j, m):
        if not 0 <= j < self.M:
            raise IndexError(f"AWG index {j} outside 0..{self.M - 1}")
        if not 0 <= m < self.N:
            raise IndexError(f"channel index {m} outside 0..{self.N - 1}")

    def resolve(self, j, m):
        if not 0 <= j < self.M:
            return None
        return m if 0 <= m < self.N else None

    @property
    def crosstalk_ratio(self) -> float:
        return 0.0 if self.crosstalk_floor_db is None else lin(self.crosstalk_floor_db)

    def channel_response(self, f, j: int, m: int):
        self._check(j, m)
        fx, tx = self.tables[(j, m)]
        return np.interp(np.asarray(f, dtype=float), fx, tx, left=self.floor, right=self.floor)

    def center(self, j: int, m) -> float:
        """Midpoint of the interpolated -3 dB crossings around the tabulated peak."""
        if np.ndim(m):
            return np.array([self.center(j, int(k)) for k in np.asarray(m).ravel()])
        fx, tx = self.tables[(j, int(m))]
        k = int(np.argmax(tx))
        half = 0.5 * tx[k]
        lo = k
        while lo > 0 and tx[lo] > half:
            lo -= 1
        hi = k
        while hi < len(tx) - 1 and tx[hi] > half:
            hi += 1
        if tx[lo] > half or tx[hi] > half:
            return float(fx[k])
        f_lo = np.interp(half, [tx[lo], tx[lo + 1]], [fx[lo], fx[lo + 1]])
        f_hi = np.interp(half, [tx[hi], tx[hi - 1]], [fx[hi], fx[hi - 1]])
        return 0.5 * float(f_lo + f_hi)

    @property
    def spacing(self) -> float:
        if self.N < 2:
            return float("nan")
        return (self.center(0, self.N - 1) - self.center(0, 0)) / (self.N - 1)

    def frequency_span(self) -> tuple:
        lo = min(float(fx[0]) for fx, _ in self.tables.values())
        hi = max(float(fx[-1]) for fx, _ in self.tables.values())
        return lo, hi

    def windows(self, j, m, f_lo, f_hi):
        return [(f_lo, f_hi)]

    def response_matrix(self, freqs, weights=None):
        return _response_matrix(self, freqs, weights)


def import_smatrix(path: str | Path, crosstalk_floor_db: float | None = None) -> TabulatedAwgBank:
    """Read a ``frequency_hz,awg_index,input_port,output_channel,transmission_db`` table."""
    path = Path(path)
    groups: dict = defaultdict(list)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != SMATRIX_HEADER:
            raise ValueError(f"{path}: expected header {','.join(SMATRIX_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 columns, got {len(row)}")
            try:
                f = float(row[0])
                a, p, ch = int(row[1]), int(row[2]), int(row[3])
                t = float(row[4])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from None
            if a < 1 or p < 1 or ch < 1:
                raise ValueError(f"{path}:{lineno}: indices are 1-based")
            groups[(a, p, ch)].append((f, t))
    if not groups:
        raise ValueError(f"{path}: table has no rows")
    sources = sorted({(a, p) for a, p, _ in groups})
    channels = sorted({ch for _, _, ch in groups})
    if channels != list(range(1, len(channels) + 1)):
        raise ValueError(f"{path}: output channels must run 1..N without gaps")
    tables = {}
    for j, (a, p) in enumerate(sources):
        for ch in channels:
            rows = groups.get((a, p, ch))
            if rows is None:
                raise ValueError(f"{path}: missing channel {ch} for awg {a} port {p}")
            arr = np.array(rows)
            if len(arr) < 2 or np.any(np.diff(arr[:, 0]) <= 0):
                raise ValueError(f"{path}: frequencies must be strictly increasing for awg {a} "
                                 f"port {p} channel {ch}")
            tables[(j, ch - 1)] = (arr[:, 0], 10.0 ** (arr[:, 1] / 10.0))
    return TabulatedAwgBank(M=len(sources), N=len(channels), tables=tables, sources=tuple(sources),
                            crosstalk_floor_db=crosstalk_floor_db)


def export_smatrix(bank, freqs: Sequence[float], path: str | Path, ports: Sequence[int] | None = None) -> None:
    """Tabulate ``bank`` on ``freqs``; AWG j goes to awg_index j+1 (or to input port ``ports[j]``
    of awg_index 1 when ``ports`` is given, i.e. a single multi-input device)."""
    freqs = np.asarray(freqs, dtype=float)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SMATRIX_HEADER)
        for j in range(bank.M):
            awg, port = (j + 1, 1) if ports is None else (1, ports[j])
            for m in range(bank.N):
                t = np.maximum(bank.channel_response(freqs, j, m), lin(TABLE_FLOOR_DB))
                for f, v in zip(freqs, 10.0 * np.log10(t)):
                    w.writerow([repr(float(f)), awg, port, m + 1, repr(float(v))])
