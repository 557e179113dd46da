"""Band-pass FIR bank and Hilbert transformer with integer datapaths.

Both filters run per window with the delay line cleared at the first sample,
the way a shared register bank is reset when it switches channel/window.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fixedpoint import ACC_WIDTH, QFormat, quantize, round_shift, saturate
from .signal import SignalWindow

N_BP_TAPS = 32
N_HT_TAPS = 31
HT_DELAY = (N_HT_TAPS - 1) // 2
COEF_Q = QFormat(1, 15)
SIGNAL_FRAC = 4

DEFAULT_BANDS: dict[str, tuple[float, float]] = {
    "delta": (1.0, 4.0),
    "theta": (4.0, 8.0),
    "alpha": (8.0, 13.0),
    "beta": (13.0, 30.0),
    "gamma": (30.0, 80.0),
    "ripple": (80.0, 150.0),
    "hfo1": (200.0, 300.0),
    "hfo2": (300.0, 400.0),
}


def freq_response(coefs, freqs, sample_rate_hz: float) -> np.ndarray:
    """Complex response of an FIR at the given frequencies (direct DFT)."""
    coefs = np.asarray(coefs, dtype=float)
    k = np.arange(len(coefs))
    return np.exp(-2j * np.pi * np.outer(np.atleast_1d(freqs), k) / sample_rate_hz) @ coefs


def design_bandpass_float(band: tuple[float, float], sample_rate_hz: float,
                          n_taps: int = N_BP_TAPS) -> np.ndarray:
    """Hamming-windowed sinc band-pass with an exact DC null, peak gain 1.

    The DC null is obtained by subtracting a scaled copy of the window, which
    keeps the taps symmetric. Short filters cannot resolve bands narrower than
    roughly fs/n_taps; such bands come out as DC-free low-frequency shapes with
    small in-band gain rather than being rejected.
    """
    lo, hi = band
    nyq = sample_rate_hz / 2
    if not (0 < lo < hi < nyq):
        raise ValueError(f"band edges must satisfy 0 < lo < hi < {nyq:g} Hz, got {band}")
    k = np.arange(n_taps) - (n_taps - 1) / 2
    win = np.hamming(n_taps)

    def lowpass(fc):
        return 2 * fc / sample_rate_hz * np.sinc(2 * fc / sample_rate_hz * k)

    c = (lowpass(hi) - lowpass(lo)) * win
    c = c - win * c.sum() / win.sum()
    grid = np.linspace(0, nyq, 2048)
    peak = np.abs(freq_response(c, grid, sample_rate_hz)).max()
    return c / peak


def design_bandpass(band: tuple[float, float], sample_rate_hz: float) -> np.ndarray:
    """32 symmetric Q1.15 raw coefficients with integer DC gain exactly zero."""
    half = quantize(design_bandpass_float(band, sample_rate_hz)[: N_BP_TAPS // 2], COEF_Q)
    raw = np.concatenate([half, half[::-1]]).astype(np.int64)
    # symmetric taps give an even sum; fold it into the two centre taps
    excess = int(raw.sum())
    mid = N_BP_TAPS // 2
    raw[mid - 1] -= excess // 2
    raw[mid] -= excess // 2
    return raw


def design_hilbert_float(n_taps: int = N_HT_TAPS) -> np.ndarray:
    n = np.arange(n_taps) - (n_taps - 1) // 2
    odd = n % 2 != 0
    h = np.zeros(n_taps)
    h[odd] = 2.0 / (np.pi * n[odd])
    return h * np.hamming(n_taps)


def design_hilbert() -> np.ndarray:
    half = quantize(design_hilbert_float()[:HT_DELAY], COEF_Q).astype(np.int64)
    return np.concatenate([half, [0], -half[::-1]])


@dataclass(frozen=True, eq=False)
class FirBank:
    """Band coefficient memory plus the Hilbert taps, all raw Q1.15."""

    sample_rate_hz: float
    bands: dict[str, np.ndarray]
    edges: dict[str, tuple[float, float]]
    hilbert: np.ndarray = field(default_factory=design_hilbert)

    def __post_init__(self):
        for name, c in self.bands.items():
            c = np.asarray(c, dtype=np.int64)
            if c.shape != (N_BP_TAPS,):
                raise ValueError(f"band {name!r} needs {N_BP_TAPS} taps")
            if np.any(c != c[::-1]):
                raise ValueError(f"band {name!r} coefficients are not symmetric")
            self.bands[name] = c
        h = np.asarray(self.hilbert, dtype=np.int64)
        if h.shape != (N_HT_TAPS,):
            raise ValueError(f"Hilbert transformer needs {N_HT_TAPS} taps")
        if np.any(h != -h[::-1]) or np.any(h[1::2] != 0):
            raise ValueError("Hilbert taps must be antisymmetric with zeros at even offsets")
        object.__setattr__(self, "hilbert", h)

    @classmethod
    def default(cls, sample_rate_hz: float = 2000.0,
                bands: dict[str, tuple[float, float]] | None = None) -> "FirBank":
        bands = dict(DEFAULT_BANDS if bands is None else bands)
        coefs = {name: design_bandpass(edge, sample_rate_hz) for name, edge in bands.items()}
        return cls(sample_rate_hz, coefs, bands)

    @property
    def band_names(self) -> list[str]:
        return list(self.bands)

    def coefs(self, band: str) -> np.ndarray:
        try:
            return self.bands[band]
        except KeyError:
            raise KeyError(f"unknown band {band!r}") from None

    def float_coefs(self, band: str) -> np.ndarray:
        return self.coefs(band) * COEF_Q.lsb

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["band", "f_lo_hz", "f_hi_hz"] + [f"c{k}" for k in range(N_BP_TAPS)])
            for name, c in self.bands.items():
                lo, hi = self.edges.get(name, ("", ""))
                w.writerow([name, lo, hi] + [int(v) for v in c])

    @classmethod
    def from_csv(cls, path, sample_rate_hz: float = 2000.0) -> "FirBank":
        bands, edges = {}, {}
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:3] != ["band", "f_lo_hz", "f_hi_hz"]:
            raise ValueError(f"{path}: not a coefficient bank file")
        for row in rows[1:]:
            if not row:
                continue
            if len(row) != 3 + N_BP_TAPS:
                raise ValueError(f"{path}: band {row[0]!r} must have {N_BP_TAPS} coefficients")
            bands[row[0]] = np.array([int(v) for v in row[3:]], dtype=np.int64)
            if row[1] and row[2]:
                edges[row[0]] = (float(row[1]), float(row[2]))
        return cls(sample_rate_hz, bands, edges)


def fir_raw(x: np.ndarray, coefs: np.ndarray, shift: int) -> np.ndarray:
    """Zero-state integer convolution, rounded right by ``shift``, saturated."""
    x = np.asarray(x, dtype=np.int64)
    acc = np.convolve(x, coefs)[: x.shape[-1]]
    return saturate(round_shift(acc, shift), ACC_WIDTH)


def filter_window(w: SignalWindow, band: str, bank: FirBank,
                  out_frac: int = SIGNAL_FRAC) -> SignalWindow:
    """Band-pass every channel of ``w``; output keeps ``out_frac`` fraction bits."""
    c = bank.coefs(band)
    shift = w.q.frac_bits + COEF_Q.frac_bits - out_frac
    out = np.stack([fir_raw(ch, c, shift) for ch in w.samples])
    return w.replace(samples=out, q=QFormat(ACC_WIDTH - out_frac, out_frac),
                     warmup=w.warmup + N_BP_TAPS - 1)


@dataclass(frozen=True, eq=False)
class AnalyticSignal:
    """Delayed real part and Hilbert output in a shared Q format.

    Samples before ``valid_from`` are filter transients.
    """

    re: np.ndarray
    im: np.ndarray
    q: QFormat
    valid_from: int = 0

    def __post_init__(self):
        re = np.asarray(self.re, dtype=np.int64)
        im = np.asarray(self.im, dtype=np.int64)
        if re.shape != im.shape or re.ndim != 1:
            raise ValueError("re and im must be equal-length 1-D sequences")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    def __len__(self):
        return len(self.re)

    def valid(self) -> tuple[np.ndarray, np.ndarray]:
        return self.re[self.valid_from:], self.im[self.valid_from:]


def hilbert_window(w: SignalWindow, channel: int | None = None,
                   bank: FirBank | None = None) -> AnalyticSignal:
    """Analytic signal of one channel of ``w`` (the only one if not given).

    ``im`` is the 31-tap transformer output, ``re`` the input delayed by the
    transformer's group delay so both refer to the same instant.
    """
    if channel is None:
        if len(w.channel_ids) != 1:
            raise ValueError("pick a channel for a multichannel window")
        x = w.samples[0]
    else:
        x = w.channel(channel)
    if len(x) <= N_HT_TAPS:
        raise ValueError(f"window must be longer than {N_HT_TAPS} samples")
    taps = bank.hilbert if bank is not None else HILBERT_TAPS
    im = fir_raw(x, taps, COEF_Q.frac_bits)
    re = np.concatenate([np.zeros(HT_DELAY, dtype=np.int64), x[:-HT_DELAY]])
    return AnalyticSignal(re, im, w.q, valid_from=w.warmup + N_HT_TAPS)


HILBERT_TAPS = design_hilbert()
HILBERT_TAPS.setflags(write=False)


def load_bank(path: str | Path | None, sample_rate_hz: float) -> FirBank:
    if path is None:
        return FirBank.default(sample_rate_hz)
    return FirBank.from_csv(path, sample_rate_hz)
