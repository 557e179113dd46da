"""Divider-free arithmetic used by the feature extractor.

* ratio calculator: leading-one normalisation, 64-entry reciprocal LUT with
  one linear interpolation, multiply, shift back
* LAA arctangent with a 32-entry additive correction table
* quarter-wave sine/cosine table
* l-inf envelope and a shift-and-add vector magnitude

All routines are vectorised over int64 arrays; the scalar entry points wrap
them so both paths are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fixedpoint import ACC_WIDTH, FEATURE_Q, FixedPoint, QFormat, round_shift, saturate

# reciprocal of m in [0.5, 1): 64 segments, 65 knots, Q.16 values in (2^16, 2^17]
RECIP_SEGMENTS = 64
RECIP_LUT = np.array([round(2 ** 16 / (0.5 + i / (2 * RECIP_SEGMENTS)))
                      for i in range(RECIP_SEGMENTS + 1)], dtype=np.int64)
_NORM_BITS = 16          # normalised denominator m has 16 bits, m in [2^15, 2^16)
_SEG_SHIFT = _NORM_BITS - 1 - 6   # 9 fraction bits between knots

PHASE_Q = QFormat(3, 13)
_Q16 = 1 << 16
PI_Q16 = round(math.pi * _Q16)
HALF_PI_Q16 = round(math.pi / 2 * _Q16)
PI_Q13 = round(math.pi * 2 ** PHASE_Q.frac_bits)
LAA_K = 0.28
_LAA_K_Q16 = round(LAA_K * _Q16)
LAA_LUT_SIZE = 32


def _laa_float(z):
    return z / (1 + LAA_K * z * z)


# additive correction sampled at bin midpoints against the true arctangent
LAA_LUT = np.array([round((math.atan(zm) - _laa_float(zm)) * _Q16)
                    for zm in ((i + 0.5) / LAA_LUT_SIZE for i in range(LAA_LUT_SIZE))],
                   dtype=np.int64)

# quarter-wave sine, 64 segments, Q1.15
SIN_SEGMENTS = 64
SIN_LUT = np.array([round(32767 * math.sin(math.pi / 2 * i / SIN_SEGMENTS))
                    for i in range(SIN_SEGMENTS + 1)], dtype=np.int64)
TRIG_Q = QFormat(1, 15)
_ANGLE_BITS = 16
# Q3.13 radians -> 16-bit binary angle: multiply by 2^16 / (2*pi) / 2^13, Q.16 constant
_RAD_TO_BAM_Q16 = round(2 ** _ANGLE_BITS / (2 * math.pi) / 2 ** PHASE_Q.frac_bits * _Q16)

for _t in (RECIP_LUT, LAA_LUT, SIN_LUT):
    _t.setflags(write=False)


@dataclass(frozen=True)
class RatioResult:
    value: FixedPoint
    saturated: bool

    def to_float(self) -> float:
        return self.value.to_float()


@dataclass(frozen=True)
class PhasePoint:
    theta: FixedPoint
    amp: FixedPoint

    def __post_init__(self):
        if self.amp.raw < 0:
            raise ValueError("envelope must be non-negative")
        if not -PI_Q13 < self.theta.raw <= PI_Q13:
            raise ValueError("phase outside (-pi, pi]")


def bit_length(x: np.ndarray) -> np.ndarray:
    """Position of the leading one of non-negative int64 values (0 for 0)."""
    x = np.array(x, dtype=np.int64)
    n = np.zeros(x.shape, dtype=np.int64)
    for s in (32, 16, 8, 4, 2, 1):
        big = x >= (1 << s)
        n[big] += s
        x[big] >>= s
    return n + (x > 0)


def shift_round(x: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Elementwise rounding shift by per-element amounts (negative = left)."""
    x = np.asarray(x, dtype=np.int64)
    n = np.broadcast_to(np.asarray(n, dtype=np.int64), x.shape)
    right = np.maximum(n, 0)
    half = np.where(right > 0, np.left_shift(1, np.maximum(right - 1, 0)), 0)
    mag = (np.abs(x) + half) >> right
    out = np.where(x < 0, -mag, mag)
    return np.left_shift(out, np.maximum(-n, 0))


def reciprocal_q16(m: np.ndarray) -> np.ndarray:
    """2^32 / m for 16-bit normalised m in [2^15, 2^16), via LUT + interpolation."""
    off = np.asarray(m, dtype=np.int64) - (1 << (_NORM_BITS - 1))
    seg = off >> _SEG_SHIFT
    frac = off & ((1 << _SEG_SHIFT) - 1)
    lo = RECIP_LUT[seg]
    return lo + shift_round((RECIP_LUT[seg + 1] - lo) * frac, _SEG_SHIFT)


def ratio_raw(num, den, out_frac: int = FEATURE_Q.frac_bits, width: int = ACC_WIDTH):
    """Vectorised ratio calculator.

    Returns ``(raw, saturated)`` where ``raw`` approximates
    ``num / den * 2**out_frac``. ``den`` below one LSB flags saturation and
    returns the largest representable value.
    """
    num = np.asarray(num, dtype=np.int64)
    den = np.asarray(den, dtype=np.int64)
    if np.any(den < 0):
        raise ValueError("denominator must be non-negative")
    sat = den < 1
    d = np.where(sat, 1, den)
    k = bit_length(d)
    m = _normalise(d, k)
    r = reciprocal_q16(m)
    raw = shift_round(num * r, _NORM_BITS + k - out_frac)
    top = (1 << (width - 1)) - 1
    raw = np.clip(raw, -top - 1, top)
    return np.where(sat, top, raw), sat


def _normalise(d, k):
    # truncating shift keeps m strictly below 2^16
    return np.where(k >= _NORM_BITS, d >> np.maximum(k - _NORM_BITS, 0),
                    np.left_shift(d, np.maximum(_NORM_BITS - k, 0)))


def ratio_calculate(num: int, den: int, out_q: QFormat = FEATURE_Q) -> RatioResult:
    """Scalar ratio of two raw accumulators, result in ``out_q``."""
    if den < 0:
        raise ValueError("denominator must be non-negative")
    if den < 1:
        return RatioResult(FixedPoint.max_value(out_q), True)
    k = int(den).bit_length()
    m = den >> (k - _NORM_BITS) if k >= _NORM_BITS else den << (_NORM_BITS - k)
    r = int(reciprocal_q16(np.int64(m)))
    raw = round_shift(int(num) * r, _NORM_BITS + k - out_q.frac_bits)
    return RatioResult(FixedPoint(saturate(raw, out_q.width), out_q), False)


def _raw(v):
    return v.raw if isinstance(v, FixedPoint) else v


def laa_atan2_raw(re, im) -> np.ndarray:
    """Four-quadrant LAA phase of raw (re, im) arrays, Q3.13 radians.

    Points with re = im = 0 return 0; the scalar wrapper rejects them.
    """
    re = np.asarray(re, dtype=np.int64)
    im = np.asarray(im, dtype=np.int64)
    a, b = np.abs(re), np.abs(im)
    swap = b > a
    hi = np.where(swap, b, a)
    lo = np.where(swap, a, b)
    z, _ = ratio_raw(lo, np.where(hi == 0, 1, hi), 16)
    z2 = shift_round(z * z, 16)
    t, _ = ratio_raw(z, _Q16 + shift_round(_LAA_K_Q16 * z2, 16), 16)
    t = t + LAA_LUT[np.minimum(z >> 11, LAA_LUT_SIZE - 1)]
    t = np.where(swap, HALF_PI_Q16 - t, t)
    t = np.where(re < 0, PI_Q16 - t, t)
    t = np.where(im < 0, -t, t)
    t = shift_round(t, 16 - PHASE_Q.frac_bits)
    return np.where(hi == 0, 0, t)


def laa_phase(re, im) -> FixedPoint:
    """Phase of one complex sample; accepts raw ints or same-format FixedPoints."""
    r, i = _raw(re), _raw(im)
    if r == 0 and i == 0:
        raise ValueError("phase of (0, 0) is undefined")
    return FixedPoint(int(laa_atan2_raw(r, i)), PHASE_Q)


def wrap_phase_raw(d: np.ndarray) -> np.ndarray:
    """Wrap Q3.13 phase differences into (-pi, pi]."""
    d = np.asarray(d, dtype=np.int64)
    two_pi = 2 * PI_Q13
    d = np.where(d > PI_Q13, d - two_pi, d)
    return np.where(d <= -PI_Q13, d + two_pi, d)


def _quarter(u):
    idx = np.minimum(u >> 8, SIN_SEGMENTS - 1)
    frac = u - (idx << 8)
    lo = SIN_LUT[idx]
    return lo + shift_round((SIN_LUT[idx + 1] - lo) * frac, 8)


def _sin_bam(ang):
    quad = (ang >> 14) & 3
    u = ang & 0x3FFF
    mag = np.where(quad % 2 == 0, _quarter(u), _quarter((1 << 14) - u))
    return np.where(quad >= 2, -mag, mag)


def to_binary_angle(theta_raw) -> np.ndarray:
    ang = shift_round(np.asarray(theta_raw, dtype=np.int64) * _RAD_TO_BAM_Q16, 16)
    return ang & ((1 << _ANGLE_BITS) - 1)


def sincos_raw(theta_raw) -> tuple[np.ndarray, np.ndarray]:
    """Q1.15 sine and cosine of Q3.13 phases."""
    ang = to_binary_angle(theta_raw)
    return _sin_bam(ang), _sin_bam((ang + (1 << 14)) & 0xFFFF)


def sin_lut(theta: FixedPoint) -> FixedPoint:
    return FixedPoint(int(sincos_raw(theta.raw)[0]), TRIG_Q)


def cos_lut(theta: FixedPoint) -> FixedPoint:
    return FixedPoint(int(sincos_raw(theta.raw)[1]), TRIG_Q)


def linf_raw(re, im) -> np.ndarray:
    return np.maximum(np.abs(np.asarray(re, dtype=np.int64)), np.abs(np.asarray(im, dtype=np.int64)))


def linf_envelope(re, im):
    """max(|re|, |im|); FixedPoint in, FixedPoint out (raw ints also accepted)."""
    if isinstance(re, FixedPoint):
        if not isinstance(im, FixedPoint) or im.q != re.q:
            raise ValueError("re and im must share a Q format")
        return FixedPoint(saturate(max(abs(re.raw), abs(im.raw)), re.q.width), re.q)
    return int(linf_raw(re, im)) if np.ndim(re) == 0 else linf_raw(re, im)


def magnitude_raw(x, y) -> np.ndarray:
    """Shift-and-add sqrt(x^2 + y^2): max(L, L - L/8 + S/2), error -3.0% .. +0.8%."""
    a, b = np.abs(np.asarray(x, dtype=np.int64)), np.abs(np.asarray(y, dtype=np.int64))
    big, small = np.maximum(a, b), np.minimum(a, b)
    return np.maximum(big, big - shift_round(big, 3) + shift_round(small, 1))


def phase_point(re, im, q: QFormat) -> PhasePoint:
    return PhasePoint(laa_phase(re, im), FixedPoint(saturate(max(abs(re), abs(im)), q.width), q))
