"""Saturating fixed-point arithmetic.

Every integer datapath in the package goes through the helpers here so that
rounding (half away from zero) and overflow behaviour (saturate, never wrap)
are identical between scalar and vectorised code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACC_WIDTH = 32


@dataclass(frozen=True)
class QFormat:
    """Signed two's-complement format; ``int_bits`` includes the sign bit."""

    int_bits: int
    frac_bits: int

    def __post_init__(self):
        if self.width < 1:
            raise ValueError(f"Q format must be at least 1 bit wide, got {self}")

    @property
    def width(self) -> int:
        return self.int_bits + self.frac_bits

    @property
    def min_raw(self) -> int:
        return -(1 << (self.width - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.width - 1)) - 1

    @property
    def lsb(self) -> float:
        return 2.0 ** -self.frac_bits

    def __str__(self):
        return f"Q{self.int_bits}.{self.frac_bits}"


ADC_Q = QFormat(10, 0)
FEATURE_Q = QFormat(16, 16)


def round_shift(x, n: int):
    """Arithmetic right shift by ``n`` bits, rounding half away from zero.

    Negative ``n`` shifts left. Works on Python ints and int64 arrays.
    """
    if n <= 0:
        return x << (-n)
    half = 1 << (n - 1)
    if isinstance(x, np.ndarray):
        mag = (np.abs(x) + half) >> n
        return np.where(x < 0, -mag, mag)
    mag = (abs(x) + half) >> n
    return -mag if x < 0 else mag


def round_div(num: int, den: int) -> int:
    """Integer division rounding half away from zero (den > 0)."""
    q, r = divmod(abs(num), den)
    if 2 * r >= den:
        q += 1
    return -q if num < 0 else q


def saturate(x, width: int):
    lo, hi = -(1 << (width - 1)), (1 << (width - 1)) - 1
    if isinstance(x, np.ndarray):
        return np.clip(x, lo, hi)
    return min(max(x, lo), hi)


def round_half_away(x):
    """Round floats to the nearest integer, ties away from zero."""
    if isinstance(x, np.ndarray):
        return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)
    return int(np.sign(x) * np.floor(abs(x) + 0.5))


def quantize(x, q: QFormat):
    """Float (scalar or array) to saturated raw integers in format ``q``."""
    scaled = np.asarray(x, dtype=float) * 2.0 ** q.frac_bits
    if scaled.ndim == 0:
        return saturate(round_half_away(float(scaled)), q.width)
    return saturate(round_half_away(scaled), q.width)


def div_by_count(acc: int, n: int, shift_out: int, width: int = ACC_WIDTH) -> int:
    """Compute ``acc * 2**shift_out / n`` the way the datapath does it.

    Power-of-two counts use a plain rounding shift. Other counts multiply by
    a normalised reciprocal constant (2**32 <= R < 2**33), which is what a
    hardware implementation would keep in a register per window length.
    """
    if n < 1:
        raise ValueError("count must be positive")
    if n & (n - 1) == 0:
        out = round_shift(acc, n.bit_length() - 1 - shift_out)
    else:
        s = n.bit_length()
        recip = round_div(1 << (32 + s), n)
        out = round_shift(acc * recip, 32 + s - shift_out)
    return saturate(out, width)


@dataclass(frozen=True)
class FixedPoint:
    raw: int
    q: QFormat

    def __post_init__(self):
        if not (self.q.min_raw <= self.raw <= self.q.max_raw):
            raise ValueError(f"raw value {self.raw} does not fit {self.q}")

    @classmethod
    def from_float(cls, value: float, q: QFormat) -> "FixedPoint":
        return cls(int(quantize(value, q)), q)

    @classmethod
    def max_value(cls, q: QFormat) -> "FixedPoint":
        return cls(q.max_raw, q)

    def to_float(self) -> float:
        return self.raw * 2.0 ** -self.q.frac_bits

    def __float__(self):
        return self.to_float()

    def rescale(self, q: QFormat) -> "FixedPoint":
        return rescale(self, q)

    def __repr__(self):
        return f"FixedPoint({self.to_float()!r}, {self.q})"


def rescale(a: FixedPoint, q: QFormat) -> FixedPoint:
    raw = round_shift(a.raw, a.q.frac_bits - q.frac_bits)
    return FixedPoint(saturate(raw, q.width), q)


def _check_same(a: FixedPoint, b: FixedPoint):
    if a.q != b.q:
        raise ValueError(f"format mismatch {a.q} vs {b.q}; rescale explicitly")


def fx_add(a: FixedPoint, b: FixedPoint) -> FixedPoint:
    _check_same(a, b)
    return FixedPoint(saturate(a.raw + b.raw, a.q.width), a.q)


def fx_sub(a: FixedPoint, b: FixedPoint) -> FixedPoint:
    _check_same(a, b)
    return FixedPoint(saturate(a.raw - b.raw, a.q.width), a.q)


def fx_mul(a: FixedPoint, b: FixedPoint, out: QFormat | None = None) -> FixedPoint:
    """Full-precision product rounded into ``out`` (defaults to ``a``'s format)."""
    out = out or a.q
    raw = round_shift(a.raw * b.raw, a.q.frac_bits + b.q.frac_bits - out.frac_bits)
    return FixedPoint(saturate(raw, out.width), out)


def fx_abs(a: FixedPoint) -> FixedPoint:
    return FixedPoint(saturate(abs(a.raw), a.q.width), a.q)
