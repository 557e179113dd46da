"""Biphasic current stimulator driving a series R + C electrode load.

Each period: a cathodic phase, an anodic phase from the same current sink
(scaled by 1 + mismatch), then charge balancing. If the residual capacitor
voltage is outside +-v_safe an active correction current (a fraction of the
amplitude) pulls it back to the band edge, after which the passive switch
shorts the electrode for the rest of the period.

Sign convention: positive current charges the electrode capacitor positively
(anodic). Phase edges need not sit on the sample grid; the trace repeats the
time stamp at each edge so trapezoidal integration of piecewise constant
current stays exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

AMP_RANGE_UA = (65.0, 600.0)
PW_RANGE_US = (9.375, 203.125)
FREQ_RANGE_HZ = (9.6, 65000.0)
N_CHANNELS = 16
V_SAFE = 0.05
CB_FRACTION = 0.1
DT = 0.5e-6


class StimError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class StimCommand:
    amplitude_ua: float
    pulse_width_us: float
    frequency_hz: float
    channel: int = 0

    @property
    def period_s(self) -> float:
        return 1.0 / self.frequency_hz

    @property
    def phase_charge(self) -> float:
        """Charge of one phase in coulombs."""
        return self.amplitude_ua * 1e-6 * self.pulse_width_us * 1e-6


def check(cmd: StimCommand) -> list[str]:
    """All violated bounds, one message each (empty when valid)."""
    probs = []
    for name, val, (lo, hi), unit in (("amplitude", cmd.amplitude_ua, AMP_RANGE_UA, "uA"),
                                      ("pulse_width", cmd.pulse_width_us, PW_RANGE_US, "us"),
                                      ("frequency", cmd.frequency_hz, FREQ_RANGE_HZ, "Hz")):
        if not (lo <= val <= hi):
            probs.append(f"{name} {val:g} {unit} outside [{lo:g}, {hi:g}]")
    if not (isinstance(cmd.channel, int) and 0 <= cmd.channel < N_CHANNELS):
        probs.append(f"channel {cmd.channel} outside [0, {N_CHANNELS - 1}]")
    if cmd.frequency_hz > 0 and 2 * cmd.pulse_width_us * 1e-6 >= cmd.period_s:
        probs.append(f"duty cycle: 2 x {cmd.pulse_width_us:g} us does not fit in the "
                     f"{cmd.period_s * 1e6:g} us period")
    return probs


def validate(cmd: StimCommand) -> StimCommand:
    probs = check(cmd)
    if probs:
        raise StimError(probs)
    return cmd


@dataclass(frozen=True)
class Load:
    r_ohm: float = 6e3
    c_farad: float = 330e-9

    def __post_init__(self):
        for name, v in (("resistance", self.r_ohm), ("capacitance", self.c_farad)):
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"non-physical load: {name} must be positive and finite, got {v}")

    @property
    def tau(self) -> float:
        return self.r_ohm * self.c_farad


@dataclass
class PulseCharge:
    cathodic: float
    anodic: float
    active_cb: float
    passive: float
    v_end: float

    @property
    def net(self) -> float:
        return self.cathodic + self.anodic + self.active_cb + self.passive

    @property
    def mismatch(self) -> float:
        """Net charge left by this period relative to one phase."""
        return abs(self.net) / abs(self.cathodic)


@dataclass
class StimTrace:
    t: np.ndarray
    i: np.ndarray           # amperes
    v: np.ndarray           # capacitor (residual electrode) voltage
    cb_flag: np.ndarray     # 0 none, 1 active CB, 2 passive discharge
    pulses: list[PulseCharge]
    cb_events: list[tuple[int, float, float]] = field(default_factory=list)  # (pulse, t_start, duration)

    @property
    def q(self) -> np.ndarray:
        """Cumulative charge, trapezoidal on the trace samples."""
        inc = 0.5 * (self.i[1:] + self.i[:-1]) * np.diff(self.t)
        return np.concatenate([[0.0], np.cumsum(inc)])

    @property
    def total_delivered(self) -> float:
        return sum(abs(p.cathodic) + abs(p.anodic) for p in self.pulses)

    def end_voltage(self) -> float:
        return float(self.v[-1])

    def pulse_end_voltages(self) -> np.ndarray:
        return np.array([p.v_end for p in self.pulses])

    def to_csv(self, path, seed=None) -> None:
        from .reports import write_report
        write_report(Path(path), ["t", "i", "v", "q", "cb_flag"],
                     zip(self.t, self.i, self.v, self.q, self.cb_flag.tolist()), seed)


class _Builder:
    def __init__(self, c: float, dt: float):
        self.c, self.dt = c, dt
        self.t, self.i, self.v, self.flag = [np.zeros(1)], [np.zeros(1)], [np.zeros(1)], [np.zeros(1, int)]
        self.now, self.vc = 0.0, 0.0

    def _grid(self, dur: float) -> np.ndarray:
        k = np.arange(1, int(math.floor(dur / self.dt - 1e-9)) + 1) * self.dt
        return np.append(k, dur)

    def constant(self, current: float, dur: float, flag: int) -> float:
        """Hold ``current`` for ``dur``; returns the charge moved."""
        if dur <= 0:
            return 0.0
        s = self._grid(dur)
        self._edge(current, flag)
        self._push(self.now + s, np.full(len(s), current), self.vc + current * s / self.c, flag)
        return current * dur

    def discharge(self, r: float, dur: float) -> float:
        if dur <= 0:
            return 0.0
        s = self._grid(dur)
        tau = r * self.c
        v = self.vc * np.exp(-s / tau)
        v0 = self.vc
        self._edge(-v0 / r, 2)
        self._push(self.now + s, -v / r, v, 2)
        return self.c * (v[-1] - v0)

    def idle(self, dur: float) -> None:
        self.constant(0.0, dur, 0)

    def _edge(self, current: float, flag: int) -> None:
        self._push(np.array([self.now]), np.array([current]), np.array([self.vc]), flag)

    def _push(self, t, i, v, flag) -> None:
        self.t.append(t)
        self.i.append(i)
        self.v.append(v)
        self.flag.append(np.full(len(t), flag))
        self.now, self.vc = float(t[-1]), float(v[-1])

    def arrays(self):
        return (np.concatenate(self.t), np.concatenate(self.i), np.concatenate(self.v),
                np.concatenate(self.flag))


def simulate_pulse_train(cmd: StimCommand, load: Load = Load(), n_pulses: int = 10,
                         mismatch_ppm: float = 0.0, cb_enabled: bool = True,
                         v_safe: float = V_SAFE, cb_fraction: float = CB_FRACTION,
                         dt: float = DT) -> StimTrace:
    """Cathodic-then-anodic pulses with optional active + passive charge balancing."""
    validate(cmd)
    if not isinstance(load, Load):
        load = Load(*load)
    if n_pulses < 1:
        raise ValueError("n_pulses must be at least 1")
    if dt <= 0:
        raise ValueError("dt must be positive")
    amp = cmd.amplitude_ua * 1e-6
    pw = cmd.pulse_width_us * 1e-6
    b = _Builder(load.c_farad, dt)
    pulses, events = [], []
    for k in range(n_pulses):
        start = k * cmd.period_s
        qc = b.constant(-amp, pw, 0)
        qa = b.constant(amp * (1 + mismatch_ppm * 1e-6), pw, 0)
        off = start + cmd.period_s - b.now
        q_cb = q_pas = 0.0
        if cb_enabled:
            if abs(b.vc) > v_safe:
                i_cb = -math.copysign(cb_fraction * amp, b.vc)
                need = load.c_farad * (abs(b.vc) - v_safe) / (cb_fraction * amp)
                dur = min(need, off)
                events.append((k, b.now, dur))
                q_cb = b.constant(i_cb, dur, 1)
                off -= dur
            q_pas = b.discharge(load.r_ohm, off)
        else:
            b.idle(off)
        pulses.append(PulseCharge(qc, qa, q_cb, q_pas, b.vc))
    t, i, v, flag = b.arrays()
    return StimTrace(t, i, v, flag, pulses, events)
