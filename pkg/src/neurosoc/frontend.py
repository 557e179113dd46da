"""Behavioural model of the channel-selective front-end and its DC servo loop.

Time is quantised to channel slots: each selected channel is sampled once per
2 kHz frame. The analog path is an ideal gain in front of a 10-bit ADC. The
servo feeds back a 19-bit word through a 9-bit CDAC: the coarse loop sets the
word's 9 MSBs by binary search during the first slot of a window, the fine
loop integrates ADC samples into the lower bits, and a first-order
delta-sigma modulator running at OSR x the sample rate turns the 19-bit word
into a 9-bit code stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .oracle import correlate, pink_noise

COARSE_BITS = 9
FINE_BITS = 10
WORD_BITS = COARSE_BITS + FINE_BITS          # 19
EDO_RANGE_V = 0.05
CDAC_LSB_V = 2 * EDO_RANGE_V / (1 << COARSE_BITS)   # 100 mV / 512
CDAC_MID = ((1 << COARSE_BITS) - 1) / 2      # 255.5: half-LSB centred transfer
WORD_MID = int(CDAC_MID * (1 << FINE_BITS))  # word with zero feedback
OSR = 50
CHANNEL_SLOT_S = 1 / (64 * 2000)             # 7.8125 us

MODES = ("two-step", "fine-only", "off")


@dataclass(frozen=True)
class FrontendParams:
    gain: float = 108.0                 # LNA + PGA, about 40.7 dB
    adc_bits: int = 10
    adc_lsb_v: float = 1e-3             # at the ADC input
    fs: float = 2000.0
    osr: int = OSR
    shift_gain: int = 2

    @property
    def adc_max(self) -> int:
        return (1 << (self.adc_bits - 1)) - 1

    @property
    def adc_min(self) -> int:
        return -(1 << (self.adc_bits - 1))

    def loop_gain(self, shift_gain: int | None = None) -> float:
        """Fraction of the residual removed per sample by the fine loop."""
        s = self.shift_gain if shift_gain is None else shift_gain
        return self.gain * CDAC_LSB_V / (1 << FINE_BITS) / self.adc_lsb_v / (1 << s)


def cdac_volts(code) -> np.ndarray:
    return (np.asarray(code, dtype=float) - CDAC_MID) * CDAC_LSB_V


def word_volts(word) -> np.ndarray:
    """Average feedback voltage of a 19-bit word (ideal, before modulation)."""
    return (np.asarray(word, dtype=float) / (1 << FINE_BITS) - CDAC_MID) * CDAC_LSB_V


def coarse_search(offset_v: float) -> tuple[int, float, int]:
    """9-step binary search of the CDAC code nearest to ``offset_v``.

    Returns (code, residual volts, comparator decisions). The comparator asks
    whether the offset lies above the boundary between trial-1 and trial.
    """
    code, steps = 0, 0
    for bit in range(COARSE_BITS - 1, -1, -1):
        trial = code | (1 << bit)
        steps += 1
        if offset_v >= (trial - CDAC_MID - 0.5) * CDAC_LSB_V:
            code = trial
    return code, float(offset_v - cdac_volts(code)), steps


def coarse_search_array(offsets_v) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`coarse_search` (same decisions)."""
    off = np.asarray(offsets_v, dtype=float)
    code = np.zeros(off.shape, dtype=np.int64)
    for bit in range(COARSE_BITS - 1, -1, -1):
        trial = code | (1 << bit)
        code = np.where(off >= (trial - CDAC_MID - 0.5) * CDAC_LSB_V, trial, code)
    return code, off - cdac_volts(code)


def dsm_modulate(word: int, residue: int, osr: int = OSR) -> tuple[np.ndarray, int]:
    """First-order modulation of a 19-bit word into ``osr`` 9-bit DAC codes."""
    top, frac = word >> FINE_BITS, word & ((1 << FINE_BITS) - 1)
    codes = np.empty(osr, dtype=np.int64)
    for k in range(osr):
        residue += frac
        carry = residue >> FINE_BITS
        residue &= (1 << FINE_BITS) - 1
        codes[k] = min(top + carry, (1 << COARSE_BITS) - 1)
    return codes, residue


def _dsm_mean(word: np.ndarray, residue: np.ndarray, osr: int):
    """Closed form of :func:`dsm_modulate`: mean code over the sample and new residue."""
    top, frac = word >> FINE_BITS, word & ((1 << FINE_BITS) - 1)
    total = residue + osr * frac
    carries = total >> FINE_BITS
    top_max = (1 << COARSE_BITS) - 1
    # at the top rail the carry cannot raise the code
    mean = np.where(top >= top_max, top_max, top + carries / osr)
    return mean, total & ((1 << FINE_BITS) - 1)


@dataclass
class DslState:
    """Per-channel loop state (arrays of equal length, one entry per channel).

    ``integrator`` keeps ``shift_gain`` extra fraction bits; its visible
    19-bit output is ``integrator >> shift_gain``.
    """

    coarse_code: np.ndarray
    integrator: np.ndarray
    dsm_state: np.ndarray
    shift_gain: int = 2

    def __post_init__(self):
        self.coarse_code = np.asarray(self.coarse_code, dtype=np.int64)
        self.integrator = np.asarray(self.integrator, dtype=np.int64)
        self.dsm_state = np.asarray(self.dsm_state, dtype=np.int64)
        if np.any((self.coarse_code < 0) | (self.coarse_code >= 1 << COARSE_BITS)):
            raise ValueError("coarse code must be 9-bit")

    @classmethod
    def neutral(cls, n: int = 1, shift_gain: int = 2) -> "DslState":
        """Zero-feedback state: word at mid-scale, integrator empty."""
        code = WORD_MID >> FINE_BITS
        fine = WORD_MID - (code << FINE_BITS)
        return cls(np.full(n, code), np.full(n, fine << shift_gain), np.zeros(n), shift_gain)

    @property
    def integrator_bounds(self) -> tuple[int, int]:
        lo, hi = -(1 << (WORD_BITS - 1)), (1 << (WORD_BITS - 1)) - 1
        return lo << self.shift_gain, ((hi + 1) << self.shift_gain) - 1

    def word(self) -> np.ndarray:
        w = (self.coarse_code << FINE_BITS) + (self.integrator >> self.shift_gain)
        return np.clip(w, 0, (1 << WORD_BITS) - 1)

    def copy(self) -> "DslState":
        return replace(self, coarse_code=self.coarse_code.copy(), integrator=self.integrator.copy(),
                       dsm_state=self.dsm_state.copy())


def adc_convert(v_in, v_fb, p: FrontendParams) -> tuple[np.ndarray, np.ndarray]:
    """Amplify the servo-corrected input and quantise; returns (codes, clipped)."""
    ideal = np.round(p.gain * (np.asarray(v_in) - v_fb) / p.adc_lsb_v)
    clipped = (ideal > p.adc_max) | (ideal < p.adc_min)
    return np.clip(ideal, p.adc_min, p.adc_max).astype(np.int64), clipped


def fine_loop_step(adc_sample, state: DslState, p: FrontendParams = FrontendParams()):
    """Integrate one ADC sample and modulate the new word for the next sample.

    Returns (feedback volts for the next sample, new state).
    """
    st = state.copy()
    lo, hi = st.integrator_bounds
    st.integrator = np.clip(st.integrator + np.asarray(adc_sample, dtype=np.int64), lo, hi)
    mean_code, st.dsm_state = _dsm_mean(st.word(), st.dsm_state, p.osr)
    return cdac_volts(mean_code), st


def feedback_volts(state: DslState, p: FrontendParams = FrontendParams()):
    """Feedback applied during the next sample, advancing the modulator."""
    st = state.copy()
    mean_code, st.dsm_state = _dsm_mean(st.word(), st.dsm_state, p.osr)
    return cdac_volts(mean_code), st


def run_window(v_in: np.ndarray, mode: str = "two-step",
               p: FrontendParams = FrontendParams()) -> tuple[np.ndarray, np.ndarray, DslState]:
    """Simulate one window for (channels, N) input volts from a reset loop.

    Returns ADC codes, a per-sample capture mask (unclipped and not the coarse
    slot) and the final state.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    v_in = np.atleast_2d(np.asarray(v_in, dtype=float))
    C, N = v_in.shape
    state = DslState.neutral(C, p.shift_gain)
    codes = np.zeros((C, N), dtype=np.int64)
    ok = np.zeros((C, N), dtype=bool)
    start = 0
    if mode == "two-step":
        # the first slot is spent on the binary search; no sample is delivered
        code, _ = coarse_search_array(v_in[:, 0])
        state.coarse_code = code
        state.integrator = np.zeros(C, dtype=np.int64)
        start = 1
    v_fb = np.zeros(C) if mode == "off" else word_volts(state.word())
    if mode != "off":
        v_fb, state = feedback_volts(state, p)
    for n in range(start, N):
        codes[:, n], clipped = adc_convert(v_in[:, n], v_fb, p)
        ok[:, n] = ~clipped
        if mode != "off":
            v_fb, state = fine_loop_step(codes[:, n], state, p)
    return codes, ok, state


# ---------------------------------------------------------------- scenarios

@dataclass
class EdoScenario:
    offsets_v: np.ndarray                   # per channel id
    schedule: list[list[int]]               # selected channels per window
    window_s: float = 1.0
    signal_v: float = 500e-6                # neural test signal rms
    seed: int = 0
    params: FrontendParams = field(default_factory=FrontendParams)
    mode: str = "two-step"

    def __post_init__(self):
        self.offsets_v = np.asarray(self.offsets_v, dtype=float)
        if np.any(np.abs(self.offsets_v) > EDO_RANGE_V + 1e-12):
            raise ValueError("electrode offsets must lie within +-50 mV")
        for sel in self.schedule:
            if len(sel) > 64:
                raise ValueError("at most 64 channels per window")
            if any(c < 0 or c >= len(self.offsets_v) for c in sel):
                raise ValueError("schedule refers to an unknown channel")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @classmethod
    def random(cls, n_windows: int = 3, channels_per_window: int = 64, seed: int = 0,
               max_offset_v: float = EDO_RANGE_V, **kw) -> "EdoScenario":
        """Disjoint channel groups per window, uniform random offsets."""
        rng = np.random.default_rng(seed)
        n_ch = n_windows * channels_per_window
        offsets = rng.uniform(-max_offset_v, max_offset_v, n_ch)
        sched = [list(range(w * channels_per_window, (w + 1) * channels_per_window))
                 for w in range(n_windows)]
        return cls(offsets, sched, seed=seed, **kw)


def neural_signal(n: int, fs: float, rng: np.random.Generator, scale_v: float) -> np.ndarray:
    """Test signal kept well above the servo corner: pink background from
    20 Hz plus beta and gamma rhythms, zero mean."""
    t = np.arange(n) / fs
    x = pink_noise(n, fs, rng, f_min=20.0)
    x += 1.5 * np.sin(2 * np.pi * rng.uniform(20, 30) * t + rng.uniform(0, 2 * np.pi))
    x += 0.8 * np.sin(2 * np.pi * rng.uniform(40, 80) * t + rng.uniform(0, 2 * np.pi))
    return scale_v * x / x.std()


@dataclass
class CaptureRow:
    window: int
    channel: int
    unsaturated_fraction: float
    correlation: float


def run_scenario(s: EdoScenario, mode: str | None = None) -> list[CaptureRow]:
    """Per window and channel: captured fraction and recovered-signal correlation."""
    mode = mode or s.mode
    p = s.params
    n = int(round(s.window_s * p.fs))
    rng = np.random.default_rng(s.seed)
    rows = []
    for w, sel in enumerate(s.schedule):
        clean = np.stack([neural_signal(n, p.fs, rng, s.signal_v) for _ in sel])
        v_in = clean + s.offsets_v[sel][:, None]
        codes, ok, _ = run_window(v_in, mode, p)
        for k, ch in enumerate(sel):
            frac = float(ok[k].mean())
            m = ok[k]
            if m.sum() >= 2 and np.std(codes[k, m]) > 0:
                r = correlate(codes[k, m], clean[k, m])
            else:
                r = 0.0
            rows.append(CaptureRow(w, ch, frac, r))
    return rows


def highpass_corner(shift_gain: int, p: FrontendParams = FrontendParams(),
                    freqs=None, seconds: float = 4.0, amp_v: float = 1e-3) -> float:
    """-3 dB corner of the closed fine loop from a sine sweep (Hz)."""
    p = replace(p, shift_gain=shift_gain)
    freqs = np.geomspace(0.1, 100, 61) if freqs is None else np.asarray(freqs)
    n = int(seconds * p.fs)
    t = np.arange(n) / p.fs
    v = amp_v * np.sin(2 * np.pi * np.outer(freqs, t))
    codes, _, _ = run_window(v, "fine-only", p)
    tail = codes[:, n // 2:].astype(float)
    ref = p.gain * amp_v / p.adc_lsb_v
    gain_db = 20 * np.log10(np.sqrt(2) * tail.std(axis=1) / ref)
    above = np.flatnonzero(gain_db >= -3.0)
    if len(above) == 0:
        return float(freqs[-1])
    i = above[0]
    if i == 0:
        return float(freqs[0])
    f0, f1, g0, g1 = np.log(freqs[i - 1]), np.log(freqs[i]), gain_db[i - 1], gain_db[i]
    return float(np.exp(f0 + (-3.0 - g0) * (f1 - f0) / (g1 - g0)))


def step_response(offset_v: float, n: int = 4000, p: FrontendParams = FrontendParams(),
                  mode: str = "fine-only") -> np.ndarray:
    codes, _, _ = run_window(np.full((1, n), offset_v), mode, p)
    return codes[0]


# ---------------------------------------------------------------- scenario files

def parse_scenario(path) -> EdoScenario:
    """Read a ``key = value`` scenario file (see configs/ for examples)."""
    from .config import read_kv
    kv = read_kv(path)
    seed = int(kv.get("seed", 0))
    fs = float(kv.get("fs", 2000))
    p = FrontendParams(gain=float(kv.get("gain", 108.0)), fs=fs,
                       shift_gain=int(kv.get("shift_gain", 2)), osr=int(kv.get("osr", OSR)))
    mode = kv.get("mode", "two-step")
    window_s = float(kv.get("window_s", 1.0))
    signal_v = float(kv.get("signal_uv", 500)) * 1e-6
    if "offsets_mv" in kv:
        offsets = np.array([float(v) for v in kv["offsets_mv"].split(",")]) * 1e-3
        if "schedule" in kv:
            sched = [[int(c) for c in grp.split(",") if c.strip()] for grp in kv["schedule"].split(";")]
        else:
            sched = [list(range(len(offsets)))]
        return EdoScenario(offsets, sched, window_s, signal_v, seed, p, mode)
    return EdoScenario.random(int(kv.get("windows", 3)), int(kv.get("channels_per_window", 64)),
                              seed=seed, max_offset_v=float(kv.get("offset_range_mv", 50)) * 1e-3,
                              window_s=window_s, signal_v=signal_v, params=p, mode=mode)


def write_scenario_report(rows, path, seed=None):
    from .reports import write_report
    return write_report(Path(path), ["window", "channel", "unsaturated_fraction", "correlation"],
                        [(r.window, r.channel, r.unsaturated_fraction, r.correlation) for r in rows],
                        seed)
