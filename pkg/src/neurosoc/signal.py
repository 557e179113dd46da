"""Domain types shared by the DSP, feature and classifier layers."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fixedpoint import ADC_Q, FixedPoint, QFormat

MAX_WINDOW_CHANNELS = 64
MAX_FEATURES = 64
WINDOW_RANGE_S = (0.25, 2.0)
DEFAULT_LSB_VOLTS = 1e-5


class FeatureKind(enum.Enum):
    LL = "LL"
    ACT = "ACT"
    MOB = "MOB"
    COM = "COM"
    LMP = "LMP"
    SE = "SE"
    HFO_RATIO = "HFO_RATIO"
    PLV = "PLV"
    PAC = "PAC"

    @property
    def code(self) -> int:
        return list(FeatureKind).index(self)

    @property
    def needs_filter(self) -> bool:
        return self in _FILTERED

    @property
    def n_bands(self) -> int:
        return 2 if self in (FeatureKind.PAC, FeatureKind.HFO_RATIO) else int(self in _FILTERED)


_FILTERED = {FeatureKind.SE, FeatureKind.HFO_RATIO, FeatureKind.PLV, FeatureKind.PAC}


@dataclass(frozen=True)
class FeatureSpec:
    """One requested biomarker.

    ``channel`` is an int, or a pair of ints for PLV (and optionally PAC, where
    the first channel supplies the phase and the second the amplitude).
    ``band`` is a band id, or a pair of ids for PAC (phase, amplitude) and
    HFO_RATIO (numerator, denominator).
    """

    kind: FeatureKind
    channel: int | tuple[int, int]
    band: str | tuple[str, str] | None = None

    def __post_init__(self):
        kind = self.kind
        if isinstance(kind, str):
            kind = FeatureKind(kind)
            object.__setattr__(self, "kind", kind)
        if isinstance(self.channel, list):
            object.__setattr__(self, "channel", tuple(self.channel))
        if isinstance(self.band, list):
            object.__setattr__(self, "band", tuple(self.band))
        pair_ch = isinstance(self.channel, tuple)
        if kind is FeatureKind.PLV and not (pair_ch and len(self.channel) == 2):
            raise ValueError("PLV needs exactly two channels")
        if pair_ch and kind not in (FeatureKind.PLV, FeatureKind.PAC):
            raise ValueError(f"{kind.value} takes a single channel")
        nb = kind.n_bands
        if nb == 0 and self.band is not None:
            raise ValueError(f"{kind.value} does not use a band")
        if nb == 1 and not isinstance(self.band, str):
            raise ValueError(f"{kind.value} needs one band")
        if nb == 2 and not (isinstance(self.band, tuple) and len(self.band) == 2):
            raise ValueError(f"{kind.value} needs exactly two bands")

    @property
    def channels(self) -> tuple[int, ...]:
        return self.channel if isinstance(self.channel, tuple) else (self.channel,)

    @property
    def bands(self) -> tuple[str, ...]:
        if self.band is None:
            return ()
        return self.band if isinstance(self.band, tuple) else (self.band,)

    def label(self) -> str:
        ch = "-".join(str(c) for c in self.channels)
        bd = "/".join(self.bands)
        return f"{self.kind.value}:{ch}" + (f":{bd}" if bd else "")

    @classmethod
    def parse(cls, text: str) -> "FeatureSpec":
        """Inverse of :meth:`label`, e.g. ``"PLV:0-3:ripple"``."""
        parts = text.strip().split(":")
        kind = FeatureKind(parts[0])
        chans = tuple(int(c) for c in parts[1].split("-"))
        channel = chans if len(chans) > 1 else chans[0]
        band = None
        if len(parts) > 2:
            bands = tuple(parts[2].split("/"))
            band = bands if len(bands) > 1 else bands[0]
        return cls(kind, channel, band)


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[FixedPoint, ...]
    specs: tuple[FeatureSpec, ...]

    def __post_init__(self):
        if len(self.values) != len(self.specs):
            raise ValueError("values and specs differ in length")
        if len(self.values) > MAX_FEATURES:
            raise ValueError(f"at most {MAX_FEATURES} features per vector")

    def __len__(self):
        return len(self.values)

    def floats(self) -> np.ndarray:
        return np.array([v.to_float() for v in self.values], dtype=float)


@dataclass(frozen=True, eq=False)
class SignalWindow:
    """A block of multichannel fixed-point samples.

    ``samples`` holds raw integers, shape (channels, N), in format ``q``.
    ``warmup`` counts leading samples that are filter transients and must be
    left out of feature accumulation.
    """

    samples: np.ndarray
    sample_rate_hz: float
    window_len_s: float
    channel_ids: tuple[int, ...]
    q: QFormat = ADC_Q
    lsb_volts: float = DEFAULT_LSB_VOLTS
    warmup: int = 0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.int64)
        if s.ndim == 1:
            s = s[None, :]
        if s.ndim != 2:
            raise ValueError("samples must be (channels, N)")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "channel_ids", tuple(int(c) for c in self.channel_ids))
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")
        if len(self.channel_ids) != s.shape[0]:
            raise ValueError("one channel id per row is required")
        if len(set(self.channel_ids)) != len(self.channel_ids):
            raise ValueError("channel ids must be unique")
        if len(self.channel_ids) > MAX_WINDOW_CHANNELS:
            raise ValueError(f"a window carries at most {MAX_WINDOW_CHANNELS} channels")
        expected = self.sample_rate_hz * self.window_len_s
        if abs(expected - s.shape[1]) > 1e-6:
            raise ValueError(f"window has {s.shape[1]} samples, expected {expected:g}")
        if s.size and (s.min() < self.q.min_raw or s.max() > self.q.max_raw):
            raise ValueError(f"samples exceed {self.q}")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def channel(self, ch: int) -> np.ndarray:
        try:
            return self.samples[self.channel_ids.index(ch)]
        except ValueError:
            raise KeyError(f"channel {ch} not in window") from None

    def single(self, ch: int) -> "SignalWindow":
        return self.replace(samples=self.channel(ch)[None, :], channel_ids=(ch,))

    def replace(self, **kw) -> "SignalWindow":
        base = dict(samples=self.samples, sample_rate_hz=self.sample_rate_hz,
                    window_len_s=self.window_len_s, channel_ids=self.channel_ids, q=self.q,
                    lsb_volts=self.lsb_volts, warmup=self.warmup)
        base.update(kw)
        return SignalWindow(**base)

    @classmethod
    def from_samples(cls, x, sample_rate_hz: float = 2000.0, q: QFormat = ADC_Q,
                     channel_ids: Sequence[int] | None = None, warmup: int = 0) -> "SignalWindow":
        """Wrap raw samples whose length need not match a standard window."""
        x = np.atleast_2d(np.asarray(x, dtype=np.int64))
        ids = tuple(channel_ids) if channel_ids is not None else tuple(range(x.shape[0]))
        return cls(x, sample_rate_hz, x.shape[1] / sample_rate_hz, ids, q=q, warmup=warmup)


def make_windows(stream, window_len_s: float, sample_rate_hz: float,
                 channel_ids: Sequence[int] | None = None, q: QFormat = ADC_Q,
                 lsb_volts: float = DEFAULT_LSB_VOLTS) -> list[SignalWindow]:
    """Cut a (channels, T) stream into consecutive non-overlapping windows.

    A trailing partial window is dropped.
    """
    lo, hi = WINDOW_RANGE_S
    if not lo <= window_len_s <= hi:
        raise ValueError(f"window length must be within [{lo}, {hi}] s")
    if isinstance(stream, (list, tuple)):
        lengths = {len(ch) for ch in stream}
        if len(lengths) > 1:
            raise ValueError("channels have inconsistent lengths")
    arr = np.asarray(stream, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.size == 0:
        raise ValueError("empty stream")
    n = sample_rate_hz * window_len_s
    if abs(n - round(n)) > 1e-9:
        raise ValueError("window length must be a whole number of samples")
    n = int(round(n))
    count = arr.shape[1] // n
    if count == 0:
        raise ValueError("stream is shorter than one window")
    ids = tuple(channel_ids) if channel_ids is not None else tuple(range(arr.shape[0]))
    return [SignalWindow(arr[:, i * n:(i + 1) * n], sample_rate_hz, window_len_s, ids,
                         q=q, lsb_volts=lsb_volts)
            for i in range(count)]
