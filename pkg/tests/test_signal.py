import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neurosoc.signal import FeatureKind, FeatureSpec, FeatureVector, SignalWindow, make_windows
from neurosoc.fixedpoint import FixedPoint, FEATURE_Q


def test_exact_division_into_windows():
    assert len(make_windows(np.zeros((2, 8000)), 1.0, 2000)) == 4


def test_trailing_partial_window_dropped():
    ws = make_windows(np.zeros((1, 9000)), 1.0, 2000)
    assert len(ws) == 4


def test_quarter_second_windows():
    ws = make_windows(np.zeros(4000), 0.25, 2000)
    assert len(ws) == 8 and all(w.n_samples == 500 for w in ws)


@given(st.integers(1, 3), st.integers(500, 5000), st.sampled_from([0.25, 0.5, 1.0]))
def test_windows_reassemble_stream_prefix(n_ch, T, win):
    rng = np.random.default_rng(T)
    x = rng.integers(-512, 512, (n_ch, T))
    n = int(win * 2000)
    if T < n:
        with pytest.raises(ValueError):
            make_windows(x, win, 2000)
        return
    ws = make_windows(x, win, 2000)
    joined = np.concatenate([w.samples for w in ws], axis=1)
    assert np.array_equal(joined, x[:, :len(ws) * n])


@pytest.mark.parametrize("win", [0.1, 3.0])
def test_window_length_bounds(win):
    with pytest.raises(ValueError):
        make_windows(np.zeros(10000), win, 2000)


def test_inconsistent_channel_lengths():
    with pytest.raises(ValueError):
        make_windows([[0] * 4000, [0] * 3999], 1.0, 2000)


def test_window_rejects_out_of_format_samples():
    with pytest.raises(ValueError):
        SignalWindow(np.full((1, 500), 600), 2000, 0.25, (0,))


def test_window_rejects_too_many_channels():
    with pytest.raises(ValueError):
        SignalWindow(np.zeros((65, 500)), 2000, 0.25, tuple(range(65)))


def test_channel_lookup_and_single():
    w = SignalWindow(np.arange(1000).reshape(2, 500) % 100, 2000, 0.25, (7, 3))
    assert np.array_equal(w.channel(3), w.samples[1])
    assert w.single(3).channel_ids == (3,)
    with pytest.raises(KeyError):
        w.channel(5)


@pytest.mark.parametrize("text", ["LL:0", "PLV:0-3:ripple", "PAC:2:gamma/hfo1", "HFO_RATIO:1:hfo1/hfo2",
                                  "SE:4:beta"])
def test_spec_label_round_trip(text):
    assert FeatureSpec.parse(text).label() == text


@pytest.mark.parametrize("args", [(FeatureKind.PLV, 0, "ripple"), (FeatureKind.LL, (0, 1)),
                                  (FeatureKind.LL, 0, "beta"), (FeatureKind.SE, 0),
                                  (FeatureKind.PAC, 0, "gamma")])
def test_spec_validation(args):
    with pytest.raises(ValueError):
        FeatureSpec(*args)


def test_feature_vector_limit():
    v = FixedPoint(0, FEATURE_Q)
    spec = FeatureSpec(FeatureKind.LL, 0)
    with pytest.raises(ValueError):
        FeatureVector((v,) * 65, (spec,) * 65)
