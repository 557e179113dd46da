import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neurosoc.stim import (V_SAFE, Load, StimCommand, StimError, check, simulate_pulse_train,
                           validate)

NOMINAL = StimCommand(600, 100, 100)


@pytest.mark.parametrize("cmd,n_problems", [
    (StimCommand(65, 9.375, 9.6), 0),
    (StimCommand(600, 203.125, 2000), 0),
    (StimCommand(64.9, 100, 100), 1),
    (StimCommand(601, 8, 70000), 4),      # three bounds plus duty cycle
    (StimCommand(100, 100, 100, channel=16), 1),
    (StimCommand(100, 203.125, 2500), 1),  # 2 x 203 us does not fit in 400 us
])
def test_command_validation(cmd, n_problems):
    assert len(check(cmd)) == n_problems
    if n_problems:
        with pytest.raises(StimError) as e:
            validate(cmd)
        assert len(e.value.problems) == n_problems


def test_bad_load():
    for r, c in [(0, 1e-9), (1e3, -1e-9), (float("inf"), 1e-9), (1e3, float("nan"))]:
        with pytest.raises(ValueError, match="non-physical"):
            Load(r, c)


def test_voltage_is_charge_over_capacitance():
    t = simulate_pulse_train(NOMINAL, n_pulses=3, mismatch_ppm=10000)
    # exact for the constant-current phases; the sampled exponential adds ~(dt/tau)^2
    assert np.abs(t.v - t.q / Load().c_farad).max() <= 1e-6 * np.abs(t.v).max()


def test_phase_charge_exact():
    t = simulate_pulse_train(NOMINAL, n_pulses=2, mismatch_ppm=2500)
    for p in t.pulses:
        assert p.cathodic == pytest.approx(-60e-9, rel=1e-12)
        assert p.anodic == pytest.approx(60e-9 * 1.0025, rel=1e-12)


def test_zero_mismatch_is_balanced():
    t = simulate_pulse_train(NOMINAL, n_pulses=5)
    assert all(abs(p.net) < 1e-20 for p in t.pulses)
    assert abs(t.end_voltage()) < 1e-12


def test_one_percent_mismatch_corrected():
    t = simulate_pulse_train(NOMINAL, n_pulses=10, mismatch_ppm=10000)
    assert max(p.mismatch for p in t.pulses) < 1e-3
    assert np.abs(t.pulse_end_voltages()).max() <= V_SAFE


def test_without_cb_voltage_drifts():
    t = simulate_pulse_train(NOMINAL, n_pulses=10, mismatch_ppm=10000, cb_enabled=False)
    v = t.pulse_end_voltages()
    assert np.all(np.diff(v) > 0)
    assert v[-1] == pytest.approx(10 * 0.01 * 60e-9 / 330e-9, rel=1e-9)


def test_charge_closure():
    t = simulate_pulse_train(NOMINAL, n_pulses=10, mismatch_ppm=10000)
    net = sum(p.net for p in t.pulses)
    assert abs(net - t.q[-1]) <= 1e-4 * t.total_delivered
    # end charge on the capacitor equals the trace integral
    assert abs(t.q[-1] - Load().c_farad * t.end_voltage()) <= 1e-4 * t.total_delivered


@given(st.floats(0, 20000), st.sampled_from([50.0, 100.0, 200.0, 500.0]))
def test_end_voltage_bounded_for_small_mismatch(ppm, freq):
    t = simulate_pulse_train(StimCommand(600, 100, freq), n_pulses=6, mismatch_ppm=ppm)
    assert abs(t.end_voltage()) <= V_SAFE


def test_active_cb_limits_residual():
    cmd = StimCommand(600, 200, 1000)
    on = simulate_pulse_train(cmd, n_pulses=20, mismatch_ppm=100000)
    off = simulate_pulse_train(cmd, n_pulses=20, mismatch_ppm=100000, cb_enabled=False)
    assert len(on.cb_events) > 0
    assert set(np.unique(on.cb_flag)) == {0, 1, 2}
    assert np.abs(on.pulse_end_voltages()).max() <= V_SAFE
    assert off.pulse_end_voltages()[-1] > 10 * V_SAFE
    # active current is 10 % of the amplitude, opposite to the residual
    assert np.allclose(on.i[on.cb_flag == 1], -60e-6)


def test_deterministic_and_csv(tmp_path):
    a = simulate_pulse_train(NOMINAL, n_pulses=2, mismatch_ppm=5000)
    b = simulate_pulse_train(NOMINAL, n_pulses=2, mismatch_ppm=5000)
    a.to_csv(tmp_path / "a.csv", seed=0)
    b.to_csv(tmp_path / "b.csv", seed=0)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = [r for r in csv.reader(open(tmp_path / "a.csv")) if r and not r[0].startswith("#")]
    assert rows[0] == ["t", "i", "v", "q", "cb_flag"]
    assert len(rows) - 1 == len(a.t)


def test_bad_arguments():
    with pytest.raises(ValueError):
        simulate_pulse_train(NOMINAL, n_pulses=0)
    with pytest.raises(StimError):
        simulate_pulse_train(StimCommand(700, 100, 100))
