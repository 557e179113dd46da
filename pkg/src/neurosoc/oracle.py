"""Floating-point reference features, correlation harness, surrogate data.

The ideal features use the unapproximated formulas (variances, squared band
energy, true arctangent/sin/cos/sqrt) on the same filter designs as the
fixed-point path, but with unquantised coefficients and float arithmetic, so
a correlation measures the cost of the hardware approximations only.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dsp import (HT_DELAY, N_BP_TAPS, N_HT_TAPS, FirBank, design_bandpass_float,
                  design_hilbert_float)
from .features import extract
from .fixedpoint import ADC_Q
from .reports import write_report
from .signal import FeatureKind, FeatureSpec, SignalWindow

VALIDATION_SPECS = (
    FeatureSpec(FeatureKind.LL, 0),
    FeatureSpec(FeatureKind.ACT, 0),
    FeatureSpec(FeatureKind.MOB, 0),
    FeatureSpec(FeatureKind.COM, 0),
    FeatureSpec(FeatureKind.LMP, 0),
    FeatureSpec(FeatureKind.SE, 0, "gamma"),
    FeatureSpec(FeatureKind.HFO_RATIO, 0, ("hfo1", "hfo2")),
    FeatureSpec(FeatureKind.PLV, (0, 1), "ripple"),
    FeatureSpec(FeatureKind.PAC, 0, ("gamma", "hfo1")),
)


def _fir(x, c):
    return np.convolve(x, c)[: len(x)]


class IdealFilters:
    """Float counterparts of a :class:`FirBank` (same edges, no quantisation)."""

    def __init__(self, bank: FirBank):
        self.fs = bank.sample_rate_hz
        self.edges = dict(bank.edges)
        self._bank = bank
        self._coefs: dict[str, np.ndarray] = {}
        self.hilbert = design_hilbert_float()

    def coefs(self, band: str) -> np.ndarray:
        if band not in self._coefs:
            if band in self.edges:
                self._coefs[band] = design_bandpass_float(self.edges[band], self.fs)
            else:
                self._coefs[band] = self._bank.float_coefs(band)
        return self._coefs[band]

    def band(self, x: np.ndarray, band: str) -> np.ndarray:
        """Filtered signal with the transient dropped."""
        return _fir(x, self.coefs(band))[N_BP_TAPS - 1:]

    def analytic(self, x: np.ndarray, band: str) -> np.ndarray:
        y = _fir(x, self.coefs(band))
        im = _fir(y, self.hilbert)
        re = np.concatenate([np.zeros(HT_DELAY), y[:-HT_DELAY]])
        start = N_BP_TAPS - 1 + N_HT_TAPS
        return re[start:] + 1j * im[start:]


def _var(x):
    v = float(np.var(x))
    if v == 0.0:
        raise ValueError("zero variance")
    return v


def hjorth_ideal(x: np.ndarray) -> tuple[float, float, float]:
    d1 = np.diff(x)
    d2 = np.diff(d1)
    act = _var(x)
    mob = math.sqrt(_var(d1) / act)
    com = math.sqrt(_var(d2) / _var(d1)) / mob
    return act, mob, com


def ideal_feature(x: np.ndarray, spec: FeatureSpec, filters: IdealFilters | None = None,
                  channel_ids: Sequence[int] | None = None) -> float:
    """Exact-formula value of ``spec`` on a float (channels, N) window."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ids = list(channel_ids) if channel_ids is not None else list(range(x.shape[0]))

    def ch(c):
        try:
            return x[ids.index(c)]
        except ValueError:
            raise KeyError(f"channel {c} not in window") from None

    kind = spec.kind
    s = ch(spec.channels[0])
    if kind.needs_filter and filters is None:
        raise ValueError(f"{spec.label()} needs filters")
    if kind is FeatureKind.LL:
        return float(np.abs(np.diff(s)).sum() / len(s))
    if kind is FeatureKind.ACT:
        return _var(s)
    if kind is FeatureKind.MOB:
        return hjorth_ideal(s)[1]
    if kind is FeatureKind.COM:
        return hjorth_ideal(s)[2]
    if kind is FeatureKind.LMP:
        return float(s.mean())
    if kind is FeatureKind.SE:
        return float(np.mean(filters.band(s, spec.band) ** 2))
    if kind is FeatureKind.HFO_RATIO:
        den = float(np.sum(filters.band(s, spec.bands[1]) ** 2))
        if den == 0.0:
            raise ValueError("zero fast-HFO energy")
        return float(np.sum(filters.band(s, spec.bands[0]) ** 2)) / den
    if kind is FeatureKind.PLV:
        a, b = spec.channels
        za, zb = filters.analytic(ch(a), spec.band), filters.analytic(ch(b), spec.band)
        return float(abs(np.mean(np.exp(1j * (np.angle(za) - np.angle(zb))))))
    if kind is FeatureKind.PAC:
        lo = filters.analytic(s, spec.bands[0])
        hi = filters.analytic(ch(spec.channels[-1]), spec.bands[1])
        return float(abs(np.mean(np.abs(hi) * np.exp(1j * np.angle(lo)))))
    raise ValueError(f"unsupported feature kind {kind}")


def correlate(approx, ideal) -> float:
    """Pearson correlation coefficient in double precision."""
    a = np.asarray(approx, dtype=float)
    b = np.asarray(ideal, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("series must be 1-D and of equal length")
    if len(a) < 2:
        raise ValueError("need at least 2 points")
    a = a - a.mean()
    b = b - b.mean()
    na, nb = math.sqrt(float(a @ a)), math.sqrt(float(b @ b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero variance series")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def pink_noise(n: int, fs: float, rng: np.random.Generator, f_min: float = 1.0) -> np.ndarray:
    """Unit-variance 1/f noise with content below ``f_min`` removed."""
    spec = rng.normal(size=n // 2 + 1) + 1j * rng.normal(size=n // 2 + 1)
    f = np.fft.rfftfreq(n, 1 / fs)
    spec[f < f_min] = 0
    spec[f >= f_min] /= np.sqrt(f[f >= f_min])
    x = np.fft.irfft(spec, n)
    return x / x.std()


@dataclass
class SurrogateConfig:
    """Knobs of the synthetic recording generator (amplitudes in ADC codes)."""

    fs: float = 2000.0
    window_len_s: float = 1.0
    n_channels: int = 2
    background: tuple[float, float] = (8.0, 40.0)
    offset: tuple[float, float] = (0.0, 0.0)
    burst_prob: float = 0.5
    burst_amp: tuple[float, float] = (20.0, 150.0)
    burst_freqs: tuple[float, ...] = (3.0, 6.0, 10.0, 20.0, 50.0, 110.0, 250.0, 350.0)
    ripple_amp: tuple[float, float] = (5.0, 60.0)
    ripple_hz: float = 110.0
    gamma_hz: float = 50.0
    hfo_amp: tuple[float, float] = (5.0, 60.0)
    hfo_hz: float = 250.0
    fast_hfo_amp: tuple[float, float] = (5.0, 60.0)
    fast_hfo_hz: float = 350.0


def surrogate_window(rng: np.random.Generator, cfg: SurrogateConfig = SurrogateConfig()) -> np.ndarray:
    """One (channels, N) window of 10-bit codes.

    Pink background plus a random DC level, an optional oscillatory burst, a
    ripple rhythm shared by all channels with random lag and coherence, and a
    slow-HFO carrier whose amplitude follows the gamma phase by a random depth.
    """
    n = int(round(cfg.fs * cfg.window_len_s))
    t = np.arange(n) / cfg.fs
    u = rng.uniform
    gamma_phase = 2 * np.pi * cfg.gamma_hz * t + u(0, 2 * np.pi)
    ripple_phase = 2 * np.pi * cfg.ripple_hz * t + u(0, 2 * np.pi)
    coherence = u(0, 1)
    ripple_amp = u(*cfg.ripple_amp)
    depth = u(0, 1)
    hfo_amp = u(*cfg.hfo_amp)
    fast_amp = u(*cfg.fast_hfo_amp)
    out = np.empty((cfg.n_channels, n))
    for c in range(cfg.n_channels):
        x = u(*cfg.background) * pink_noise(n, cfg.fs, rng) + u(*cfg.offset)
        lag = 0.0 if c == 0 else u(-np.pi, np.pi)
        own = 2 * np.pi * cfg.ripple_hz * t + np.cumsum(rng.normal(0, 0.3, n))
        x += ripple_amp * (coherence * np.sin(ripple_phase + lag)
                           + (1 - coherence) * np.sin(own + u(0, 2 * np.pi)))
        x += 0.3 * hfo_amp * np.sin(gamma_phase)
        x += hfo_amp * (1 + depth * np.cos(gamma_phase)) / 2 * np.sin(2 * np.pi * cfg.hfo_hz * t)
        x += fast_amp * np.sin(2 * np.pi * cfg.fast_hfo_hz * t + u(0, 2 * np.pi))
        if u() < cfg.burst_prob:
            f = cfg.burst_freqs[rng.integers(len(cfg.burst_freqs))]
            a, b = sorted(rng.integers(0, n, 2))
            env = np.zeros(n)
            env[a:b] = np.hanning(b - a) if b - a > 1 else 0
            x += u(*cfg.burst_amp) * env * np.sin(2 * np.pi * f * t + u(0, 2 * np.pi))
        out[c] = x
    return np.clip(np.round(out), ADC_Q.min_raw, ADC_Q.max_raw)


@dataclass
class CorrelationReport:
    labels: list[str]
    kinds: list[str]
    r: list[float]
    n: int
    seconds: float = 0.0
    approx: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    ideal: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least 2 windows")

    @property
    def median_r(self) -> float:
        per_kind = self.per_kind()
        return float(np.median(list(per_kind.values())))

    def per_kind(self) -> dict[str, float]:
        """Median r of all specs sharing a kind."""
        out: dict[str, list[float]] = {}
        for k, r in zip(self.kinds, self.r):
            out.setdefault(k, []).append(r)
        return {k: float(np.median(v)) for k, v in out.items()}

    def r_of(self, kind: str) -> float:
        return self.per_kind()[kind]

    def to_csv(self, path, seed: int | None = None):
        rows = [(lab, k, r, self.n) for lab, k, r in zip(self.labels, self.kinds, self.r)]
        rows.append(("median", "all", self.median_r, self.n))
        return write_report(path, ["feature", "kind", "pearson_r", "n_windows"], rows, seed)


def validate_approx(n_windows: int = 200, seed: int = 0,
                    specs: Sequence[FeatureSpec] = VALIDATION_SPECS,
                    bank: FirBank | None = None,
                    cfg: SurrogateConfig = SurrogateConfig()) -> CorrelationReport:
    """Run fixed-point and ideal paths over surrogate windows and correlate."""
    t0 = time.perf_counter()
    bank = bank or FirBank.default(cfg.fs)
    filters = IdealFilters(bank)
    rng = np.random.default_rng(seed)
    specs = tuple(specs)
    approx = np.empty((n_windows, len(specs)))
    ideal = np.empty((n_windows, len(specs)))
    ids = tuple(range(cfg.n_channels))
    for i in range(n_windows):
        x = surrogate_window(rng, cfg)
        w = SignalWindow(x.astype(np.int64), cfg.fs, cfg.window_len_s, ids)
        approx[i] = extract(w, specs, bank).floats()
        ideal[i] = [ideal_feature(x, s, filters, ids) for s in specs]
    labels = [s.label() for s in specs]
    r = [correlate(approx[:, j], ideal[:, j]) for j in range(len(specs))]
    return CorrelationReport(labels, [s.kind.value for s in specs], r, n_windows,
                             time.perf_counter() - t0,
                             {lab: approx[:, j] for j, lab in enumerate(labels)},
                             {lab: ideal[:, j] for j, lab in enumerate(labels)})


def feature_dump_rows(windows: Sequence[SignalWindow], specs: Sequence[FeatureSpec],
                      bank: FirBank):
    """Rows of (window_index, channel, kind, band, value_fixed, value_float_oracle)."""
    filters = IdealFilters(bank)
    for i, w in enumerate(windows):
        fv = extract(w, specs, bank)
        x = w.samples.astype(float)
        for s, v in zip(specs, fv.values):
            try:
                ref = ideal_feature(x, s, filters, w.channel_ids)
            except ValueError:
                ref = float("nan")
            yield (i, "-".join(map(str, s.channels)), s.kind.value, "/".join(s.bands),
                   v.raw, ref)


FEATURE_DUMP_HEADER = ["window_index", "channel", "kind", "band", "value_fixed", "value_float_oracle"]
