"""Fixed-point biomarker extraction.

Every feature is produced as a Q16.16 value in ADC-code units (codes, codes
per sample, or dimensionless for ratios and phase measures). Accumulators are
32-bit and saturate. Raw-signal features (LL, Hjorth, LMP) read the ADC codes
directly; the others go through the band-pass bank and, for phase features,
the Hilbert transformer.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .approx import (RatioResult, TRIG_Q, laa_atan2_raw, linf_raw, magnitude_raw,
                     ratio_calculate, sincos_raw, wrap_phase_raw)
from .dsp import AnalyticSignal, FirBank, filter_window, hilbert_window
from .fixedpoint import ACC_WIDTH, FEATURE_Q, FixedPoint, div_by_count, round_shift, saturate
from .signal import MAX_FEATURES, FeatureKind, FeatureSpec, FeatureVector, SignalWindow

DEFAULT_HFO_BANDS = ("hfo1", "hfo2")


def _acc(values) -> int:
    return saturate(int(np.sum(values, dtype=np.int64)), ACC_WIDTH)


def _series(w: SignalWindow, channel: int | None) -> np.ndarray:
    if channel is None:
        if len(w.channel_ids) != 1:
            raise ValueError("pick a channel for a multichannel window")
        x = w.samples[0]
    else:
        x = w.channel(channel)
    return x[w.warmup:]


def _mean(acc: int, n: int, frac_bits: int) -> FixedPoint:
    return FixedPoint(div_by_count(acc, n, FEATURE_Q.frac_bits - frac_bits), FEATURE_Q)


def _sums(x: np.ndarray):
    d1 = np.diff(x)
    d2 = np.diff(d1)
    return _acc(np.abs(x)), _acc(np.abs(d1)), _acc(np.abs(d2))


def line_length(w: SignalWindow, channel: int | None = None) -> FixedPoint:
    """Sum of |x_t - x_{t-1}| over the N-1 in-window differences, divided by N."""
    x = _series(w, channel)
    if len(x) < 2:
        raise ValueError("line length needs at least 2 samples")
    return _mean(_acc(np.abs(np.diff(x))), len(x), w.q.frac_bits)


def hjorth_activity(w: SignalWindow, channel: int | None = None) -> FixedPoint:
    x = _series(w, channel)
    if len(x) < 1:
        raise ValueError("empty window")
    return _mean(_acc(np.abs(x)), len(x), w.q.frac_bits)


def hjorth_mobility(w: SignalWindow, channel: int | None = None) -> RatioResult:
    x = _series(w, channel)
    if len(x) < 2:
        raise ValueError("mobility needs at least 2 samples")
    s0, s1, _ = _sums(x)
    return ratio_calculate(s1, s0)


def hjorth_complexity(w: SignalWindow, channel: int | None = None) -> RatioResult:
    """sum|x| * sum|d2x| / (sum|dx|)^2 with 64-bit products and one ratio."""
    x = _series(w, channel)
    if len(x) < 3:
        raise ValueError("complexity needs at least 3 samples")
    s0, s1, s2 = _sums(x)
    return ratio_calculate(s0 * s2, s1 * s1)


def lmp(w: SignalWindow, channel: int | None = None) -> FixedPoint:
    x = _series(w, channel)
    if len(x) < 1:
        raise ValueError("empty window")
    return _mean(_acc(x), len(x), w.q.frac_bits)


def band_energy(w: SignalWindow, channel: int | None = None) -> FixedPoint:
    """Mean |y| of an already band-limited window, warm-up excluded."""
    y = _series(w, channel)
    if len(y) < 1:
        raise ValueError("no samples left after warm-up")
    return _mean(_acc(np.abs(y)), len(y), w.q.frac_bits)


def spectral_energy(w: SignalWindow, band: str, bank: FirBank,
                    channel: int | None = None) -> FixedPoint:
    src = w if channel is None else w.single(channel)
    return band_energy(filter_window(src, band, bank))


def hfo_ratio_from_bands(slow: SignalWindow, fast: SignalWindow,
                         channel: int | None = None) -> RatioResult:
    """Ratio of accumulated |y| of two band-limited windows (same warm-up)."""
    a, b = _series(slow, channel), _series(fast, channel)
    if len(a) != len(b):
        raise ValueError("band signals differ in length")
    return ratio_calculate(_acc(np.abs(a)), _acc(np.abs(b)))


def hfo_ratio(w: SignalWindow, bank: FirBank, channel: int | None = None,
              bands: tuple[str, str] = DEFAULT_HFO_BANDS) -> RatioResult:
    src = w if channel is None else w.single(channel)
    return hfo_ratio_from_bands(filter_window(src, bands[0], bank),
                                filter_window(src, bands[1], bank))


def _aligned(a: AnalyticSignal, b: AnalyticSignal):
    if len(a) != len(b):
        raise ValueError("analytic signals differ in length")
    start = max(a.valid_from, b.valid_from)
    if start >= len(a):
        raise ValueError("no samples left after warm-up")
    return start


def plv(a: AnalyticSignal, b: AnalyticSignal) -> FixedPoint:
    """Mean unit phasor of the wrapped phase difference, LUT trig, approx magnitude."""
    start = _aligned(a, b)
    ta = laa_atan2_raw(a.re[start:], a.im[start:])
    tb = laa_atan2_raw(b.re[start:], b.im[start:])
    s, c = sincos_raw(wrap_phase_raw(ta - tb))
    mag = int(magnitude_raw(_acc(s), _acc(c)))
    return _mean(mag, len(s), TRIG_Q.frac_bits)


def pac(lo: AnalyticSignal, hi: AnalyticSignal) -> FixedPoint:
    """Amplitude-weighted mean phasor: phase from ``lo``, l-inf envelope of ``hi``."""
    start = _aligned(lo, hi)
    theta = laa_atan2_raw(lo.re[start:], lo.im[start:])
    amp = linf_raw(hi.re[start:], hi.im[start:])
    s, c = sincos_raw(theta)
    # products rounded back to the envelope's format before accumulation
    ss = _acc(round_shift(amp * s, TRIG_Q.frac_bits))
    cc = _acc(round_shift(amp * c, TRIG_Q.frac_bits))
    return _mean(int(magnitude_raw(ss, cc)), len(theta), hi.q.frac_bits)


class _Cache:
    """Per-window filter/Hilbert results, so shared bands are filtered once."""

    def __init__(self, w: SignalWindow, bank: FirBank):
        self.w, self.bank = w, bank
        self._bp: dict = {}
        self._an: dict = {}

    def band(self, ch: int, band: str) -> SignalWindow:
        key = (ch, band)
        if key not in self._bp:
            self._bp[key] = filter_window(self.w.single(ch), band, self.bank)
        return self._bp[key]

    def analytic(self, ch: int, band: str) -> AnalyticSignal:
        key = (ch, band)
        if key not in self._an:
            self._an[key] = hilbert_window(self.band(ch, band), bank=self.bank)
        return self._an[key]


def extract_one(spec: FeatureSpec, w: SignalWindow, bank: FirBank | None = None,
                cache: _Cache | None = None) -> FixedPoint:
    for ch in spec.channels:
        if ch not in w.channel_ids:
            raise KeyError(f"channel {ch} of {spec.label()} not in window")
    kind = spec.kind
    if kind.needs_filter:
        if bank is None:
            raise ValueError(f"{spec.label()} needs a filter bank")
        for b in spec.bands:
            bank.coefs(b)
        cache = cache or _Cache(w, bank)
    ch = spec.channels[0]
    if kind is FeatureKind.LL:
        return line_length(w, ch)
    if kind is FeatureKind.ACT:
        return hjorth_activity(w, ch)
    if kind is FeatureKind.MOB:
        return hjorth_mobility(w, ch).value
    if kind is FeatureKind.COM:
        return hjorth_complexity(w, ch).value
    if kind is FeatureKind.LMP:
        return lmp(w, ch)
    if kind is FeatureKind.SE:
        return band_energy(cache.band(ch, spec.band))
    if kind is FeatureKind.HFO_RATIO:
        return hfo_ratio_from_bands(cache.band(ch, spec.bands[0]),
                                    cache.band(ch, spec.bands[1])).value
    if kind is FeatureKind.PLV:
        a, b = spec.channels
        return plv(cache.analytic(a, spec.band), cache.analytic(b, spec.band))
    if kind is FeatureKind.PAC:
        ch_hi = spec.channels[-1]
        return pac(cache.analytic(ch, spec.bands[0]), cache.analytic(ch_hi, spec.bands[1]))
    raise ValueError(f"unsupported feature kind {kind}")


def extract(w: SignalWindow, specs: Sequence[FeatureSpec],
            bank: FirBank | None = None) -> FeatureVector:
    """Evaluate ``specs`` in order; filters run only for specs that need them."""
    specs = tuple(specs)
    if len(specs) > MAX_FEATURES:
        raise ValueError(f"at most {MAX_FEATURES} features per request")
    cache = _Cache(w, bank) if bank is not None else None
    values = tuple(extract_one(s, w, bank, cache) for s in specs)
    return FeatureVector(values, specs)
