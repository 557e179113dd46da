"""Recording ingestion (CSV, raw16), annotations, window labels, surrogate corpora."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .fixedpoint import ADC_Q, QFormat
from .oracle import pink_noise
from .signal import SignalWindow, make_windows


class IngestError(ValueError):
    pass


class MalformedHeaderError(IngestError):
    pass


class RateMismatchError(IngestError):
    pass


class AnnotationBoundsError(IngestError):
    pass


@dataclass(frozen=True)
class Annotation:
    start_s: float
    end_s: float
    label: str

    def __post_init__(self):
        if not self.end_s > self.start_s:
            raise AnnotationBoundsError(f"annotation ends before it starts: {self}")


@dataclass(frozen=True, eq=False)
class Recording:
    samples: np.ndarray                 # (channels, T) integer codes
    sample_rate_hz: float
    channel_labels: tuple[str, ...]
    annotations: tuple[Annotation, ...] = ()

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.samples, dtype=np.int64))
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "channel_labels", tuple(self.channel_labels))
        object.__setattr__(self, "annotations", tuple(self.annotations))
        if self.sample_rate_hz <= 0:
            raise IngestError("sample rate must be positive")
        if len(self.channel_labels) != s.shape[0]:
            raise MalformedHeaderError("one label per channel is required")
        if len(set(self.channel_labels)) != len(self.channel_labels):
            raise MalformedHeaderError("duplicate channel labels")
        for a in self.annotations:
            if a.start_s < 0 or a.end_s > self.duration_s + 1e-9:
                raise AnnotationBoundsError(
                    f"annotation {a.start_s}-{a.end_s} s outside recording (0-{self.duration_s} s)")

    @property
    def duration_s(self) -> float:
        return self.samples.shape[1] / self.sample_rate_hz

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    def q_format(self) -> QFormat:
        peak = int(np.abs(self.samples).max(initial=0))
        return ADC_Q if peak <= ADC_Q.max_raw else QFormat(16, 0)

    def windows(self, window_len_s: float) -> list[SignalWindow]:
        return make_windows(self.samples, window_len_s, self.sample_rate_hz,
                            tuple(range(self.n_channels)), q=self.q_format())


@dataclass
class Dataset:
    recordings: list[Recording]
    classes: tuple[str, ...] = ("background", "seizure")

    def __post_init__(self):
        self.classes = tuple(self.classes)
        for rec in self.recordings:
            for a in rec.annotations:
                if a.label not in self.classes:
                    raise IngestError(f"annotation label {a.label!r} not in classes {self.classes}")

    def class_index(self, label: str) -> int:
        return self.classes.index(label)


# ---------------------------------------------------------------- sidecar headers

def read_header(path) -> dict[str, str]:
    """``key = value`` lines; '#' starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise IngestError(f"cannot read header {path}: {e.strerror}") from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MalformedHeaderError(f"{path}:{n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _header_path(path: Path) -> Path:
    return path.with_name(path.name + ".hdr")


def _rate(hdr: dict, declared: float | None, where) -> float:
    rate = None
    if "rate" in hdr:
        try:
            rate = float(hdr["rate"])
        except ValueError:
            raise MalformedHeaderError(f"{where}: rate is not a number") from None
    if declared is not None and rate is not None and abs(declared - rate) > 1e-9:
        raise RateMismatchError(f"{where}: header rate {rate:g} Hz, requested {declared:g} Hz")
    rate = rate if rate is not None else declared
    if rate is None:
        raise MalformedHeaderError(f"{where}: sample rate unknown (no header rate, none given)")
    if rate <= 0:
        raise MalformedHeaderError(f"{where}: sample rate must be positive")
    return rate


def read_annotations(path) -> tuple[Annotation, ...]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows or [c.strip() for c in rows[0]] != ["start_s", "end_s", "label"]:
        raise MalformedHeaderError(f"{path}: annotation header must be start_s,end_s,label")
    out = []
    for r in rows[1:]:
        try:
            out.append(Annotation(float(r[0]), float(r[1]), r[2].strip()))
        except (IndexError, ValueError):
            raise IngestError(f"{path}: bad annotation row {r}") from None
    return tuple(out)


def write_annotations(path, annotations: Sequence[Annotation]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["start_s", "end_s", "label"])
        for a in annotations:
            w.writerow([f"{a.start_s:.6g}", f"{a.end_s:.6g}", a.label])


# ---------------------------------------------------------------- formats

def _read_csv(path: Path, rate: float | None) -> Recording:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise MalformedHeaderError(f"{path}: missing header row")
    labels = [c.strip() for c in rows[0]]
    if any(not lab for lab in labels):
        raise MalformedHeaderError(f"{path}: empty channel label")
    if all(_is_number(lab) for lab in labels):
        raise MalformedHeaderError(f"{path}: header row looks like data, expected channel labels")
    hdr = read_header(_header_path(path)) if _header_path(path).exists() else {}
    fs = _rate(hdr, rate, path)
    data = []
    for n, r in enumerate(rows[1:], 2):
        if not r:
            continue
        if len(r) != len(labels):
            raise IngestError(f"{path}:{n}: expected {len(labels)} values, got {len(r)}")
        try:
            data.append([int(v) for v in r])
        except ValueError:
            raise IngestError(f"{path}:{n}: non-integer sample") from None
    if not data:
        raise IngestError(f"{path}: no samples")
    return Recording(np.array(data, dtype=np.int64).T, fs, tuple(labels))


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def _read_raw16(path: Path, rate: float | None) -> Recording:
    hp = _header_path(path)
    if not hp.exists():
        raise MalformedHeaderError(f"{path}: missing sidecar header {hp.name}")
    hdr = read_header(hp)
    try:
        n_ch = int(hdr["channels"])
    except (KeyError, ValueError):
        raise MalformedHeaderError(f"{hp}: 'channels' missing or not an integer") from None
    if n_ch < 1:
        raise MalformedHeaderError(f"{hp}: channel count must be positive")
    fs = _rate(hdr, rate, hp)
    labels = [s.strip() for s in hdr.get("labels", "").split(",") if s.strip()] \
        or [f"ch{i}" for i in range(n_ch)]
    if len(labels) != n_ch:
        raise MalformedHeaderError(f"{hp}: {len(labels)} labels for {n_ch} channels")
    raw = np.fromfile(path, dtype="<i2")
    if raw.size == 0 or raw.size % n_ch:
        raise IngestError(f"{path}: size is not a whole number of {n_ch}-channel frames")
    return Recording(raw.reshape(-1, n_ch).T.astype(np.int64), fs, tuple(labels))


def ingest(path, fmt: str | None = None, sample_rate_hz: float | None = None,
           annotations=None, classes: Sequence[str] | None = None) -> Dataset:
    """Load one recording (and optional annotation CSV) as a :class:`Dataset`.

    ``fmt`` is ``csv`` or ``raw16``; it defaults from the file extension.
    Without an explicit annotation path, ``<path>.ann.csv`` is used if present.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"{path}: no such file")
    fmt = fmt or ("raw16" if path.suffix in (".raw16", ".raw", ".bin") else "csv")
    if fmt == "csv":
        rec = _read_csv(path, sample_rate_hz)
    elif fmt == "raw16":
        rec = _read_raw16(path, sample_rate_hz)
    else:
        raise IngestError(f"unknown format {fmt!r} (csv or raw16)")
    ann_path = Path(annotations) if annotations else path.with_name(path.name + ".ann.csv")
    anns = read_annotations(ann_path) if ann_path.exists() else ()
    if annotations and not ann_path.exists():
        raise IngestError(f"{ann_path}: no such file")
    rec = Recording(rec.samples, rec.sample_rate_hz, rec.channel_labels, anns)
    if classes is None:
        classes = ["background"] + sorted({a.label for a in anns} - {"background"})
    return Dataset([rec], tuple(classes))


def export_raw16(rec: Recording, path) -> Path:
    path = Path(path)
    if np.abs(rec.samples).max(initial=0) > 32767:
        raise ValueError("samples exceed 16 bits")
    rec.samples.T.astype("<i2").tofile(path)
    _header_path(path).write_text(
        f"rate = {rec.sample_rate_hz:.10g}\nchannels = {rec.n_channels}\n"
        f"labels = {','.join(rec.channel_labels)}\n")
    if rec.annotations:
        write_annotations(path.with_name(path.name + ".ann.csv"), rec.annotations)
    return path


def export_csv(rec: Recording, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(rec.channel_labels)
        w.writerows(rec.samples.T.tolist())
    _header_path(path).write_text(f"rate = {rec.sample_rate_hz:.10g}\n")
    if rec.annotations:
        write_annotations(path.with_name(path.name + ".ann.csv"), rec.annotations)
    return path


# ---------------------------------------------------------------- window labels

def window_labels(rec: Recording, window_len_s: float, classes: Sequence[str]) -> np.ndarray:
    """Class index per window by majority overlap (background if nothing covers half)."""
    n = int(rec.duration_s // window_len_s + 1e-9)
    labels = np.zeros(n, dtype=np.int64)
    starts = np.arange(n) * window_len_s
    for a in rec.annotations:
        if a.label not in classes:
            raise IngestError(f"label {a.label!r} not declared")
        overlap = np.clip(np.minimum(starts + window_len_s, a.end_s) - np.maximum(starts, a.start_s), 0, None)
        labels[overlap > window_len_s / 2] = list(classes).index(a.label)
    return labels


def event_windows(rec: Recording, window_len_s: float) -> list[tuple[int, int]]:
    """Half-open window ranges touched by each non-background annotation."""
    n = int(rec.duration_s // window_len_s + 1e-9)
    out = []
    for a in rec.annotations:
        if a.label == "background":
            continue
        first = int(a.start_s // window_len_s)
        last = min(n, int(np.ceil(a.end_s / window_len_s - 1e-9)))
        out.append((first, max(last, first + 1)))
    return out


# ---------------------------------------------------------------- surrogate corpus

@dataclass
class SeizureCorpusConfig:
    """Synthetic multichannel recording with focal seizure-like events."""

    n_channels: int = 8
    duration_s: float = 600.0
    fs: float = 2000.0
    n_events: int = 10
    event_len_s: tuple[float, float] = (12.0, 25.0)
    focal_channels: tuple[int, ...] = (1, 2, 5)
    background_amp: float = 20.0
    ictal_amp: tuple[float, float] = (80.0, 150.0)
    ictal_hz: tuple[float, float] = (4.0, 8.0)
    ripple_hz: float = 100.0
    spread: float = 0.15
    spikes_per_min: float = 6.0
    seed: int = 0
    extra: dict = field(default_factory=dict)


def seizure_corpus(cfg: SeizureCorpusConfig = SeizureCorpusConfig()) -> Dataset:
    """One recording with ``n_events`` evenly spread, jittered seizure events.

    Ictal activity: a rhythmic spike-wave discharge with rising then decaying
    amplitude on the focal channels, plus a phase-locked ripple burst; other
    channels see an attenuated copy. Background: pink noise with slow amplitude
    wander and sparse interictal spikes on random channels.
    """
    rng = np.random.default_rng(cfg.seed)
    n = int(round(cfg.duration_s * cfg.fs))
    t = np.arange(n) / cfg.fs
    x = np.empty((cfg.n_channels, n))
    for c in range(cfg.n_channels):
        wander = 1 + 0.3 * np.sin(2 * np.pi * t / rng.uniform(20, 60) + rng.uniform(0, 2 * np.pi))
        x[c] = cfg.background_amp * wander * pink_noise(n, cfg.fs, rng)
    # interictal spikes
    n_spikes = int(cfg.spikes_per_min * cfg.duration_s / 60)
    spike = -np.exp(-0.5 * ((np.arange(-60, 61) / cfg.fs) / 0.008) ** 2)
    for _ in range(n_spikes):
        c, pos = rng.integers(cfg.n_channels), rng.integers(60, n - 61)
        x[c, pos - 60:pos + 61] += rng.uniform(60, 120) * spike
    slot = cfg.duration_s / cfg.n_events
    anns = []
    for e in range(cfg.n_events):
        length = rng.uniform(*cfg.event_len_s)
        if length / slot < 0.6:
            start = e * slot + rng.uniform(0.15, 0.85 - length / slot) * slot
        else:
            start = e * slot + (slot - length) / 2
        a, b = int(start * cfg.fs), int((start + length) * cfg.fs)
        tt = t[a:b] - t[a]
        f0 = rng.uniform(*cfg.ictal_hz)
        phase = 2 * np.pi * (f0 * tt - 0.02 * f0 * tt ** 2 / length)   # slight slowing
        env = np.sin(np.pi * tt / length) ** 0.5
        amp = rng.uniform(*cfg.ictal_amp)
        wave = amp * env * (np.sin(phase) + 0.5 * np.sin(2 * phase + 0.8))
        ripple = 0.3 * amp * env * (1 + np.cos(phase)) / 2 * np.sin(2 * np.pi * cfg.ripple_hz * tt)
        for c in range(cfg.n_channels):
            g = 1.0 if c in cfg.focal_channels else cfg.spread
            x[c, a:b] += g * (wave + ripple)
        anns.append(Annotation(round(start, 3), round(start + length, 3), "seizure"))
    codes = np.clip(np.round(x), ADC_Q.min_raw, ADC_Q.max_raw).astype(np.int64)
    rec = Recording(codes, cfg.fs, tuple(f"ch{c}" for c in range(cfg.n_channels)), tuple(anns))
    return Dataset([rec], ("background", "seizure"))
