import math

import numpy as np
import pytest

from neurosoc.oracle import (VALIDATION_SPECS, IdealFilters, SurrogateConfig, correlate, hjorth_ideal,
                             ideal_feature, pink_noise, surrogate_window, validate_approx)
from neurosoc.reports import read_report
from neurosoc.signal import FeatureKind as K
from neurosoc.signal import FeatureSpec


def test_activity_of_alternating_sequence():
    assert ideal_feature(np.array([1.0, -1, 1, -1]), FeatureSpec(K.ACT, 0)) == 1.0


@pytest.mark.parametrize("f", [5.0, 40.0, 120.0])
def test_mobility_of_sinusoid_closed_form(f):
    # for x = sin(wn), var(dx)/var(x) = 4 sin^2(w/2)
    n = 20000
    w = 2 * np.pi * f / 2000
    x = np.sin(w * np.arange(n))
    mob = ideal_feature(x, FeatureSpec(K.MOB, 0))
    assert mob == pytest.approx(2 * math.sin(w / 2), rel=0.01)


def test_plv_of_identical_channels_is_one(bank):
    x = np.random.default_rng(0).normal(0, 50, 2000)
    v = ideal_feature(np.stack([x, x]), FeatureSpec(K.PLV, (0, 1), "ripple"), IdealFilters(bank))
    assert v == pytest.approx(1.0, abs=1e-12)


def test_correlate_identity_and_negation():
    a = np.random.default_rng(1).normal(size=50)
    assert correlate(a, a) == pytest.approx(1.0)
    assert correlate(a, -a) == pytest.approx(-1.0)


def test_correlate_constant_series_rejected():
    with pytest.raises(ValueError):
        correlate(np.ones(5), np.arange(5))


def test_hjorth_ideal_zero_variance():
    with pytest.raises(ValueError):
        hjorth_ideal(np.ones(10))


def test_filtered_kind_needs_filters():
    with pytest.raises(ValueError):
        ideal_feature(np.zeros(100), FeatureSpec(K.SE, 0, "beta"))


def test_pink_noise_unit_variance_and_band_limit():
    x = pink_noise(8000, 2000.0, np.random.default_rng(2), f_min=20.0)
    assert x.std() == pytest.approx(1.0, rel=1e-6)
    spec = np.abs(np.fft.rfft(x)) ** 2
    f = np.fft.rfftfreq(8000, 1 / 2000)
    assert spec[f < 20].sum() < 1e-12 * spec.sum()


def test_surrogate_is_seeded_and_in_range():
    a = surrogate_window(np.random.default_rng(3))
    b = surrogate_window(np.random.default_rng(3))
    assert np.array_equal(a, b)
    assert a.shape == (2, 2000)
    assert a.min() >= -512 and a.max() <= 511


def test_validation_harness_line_length():
    rep = validate_approx(200, seed=5, specs=[FeatureSpec(K.LL, 0), FeatureSpec(K.LMP, 0)])
    assert rep.r_of("LL") >= 0.99
    assert rep.n == 200


def test_report_csv(tmp_path):
    rep = validate_approx(20, seed=1)
    p = rep.to_csv(tmp_path / "r.csv", seed=1)
    header, rows = read_report(p)
    assert header == ["feature", "kind", "pearson_r", "n_windows"]
    assert len(rows) == len(VALIDATION_SPECS) + 1
    assert rows[-1][0] == "median"
    assert set(rep.per_kind()) == {s.kind.value for s in VALIDATION_SPECS}
    assert p.read_text().startswith("# neurosoc 0.1.0 seed=1\n")


def test_surrogate_config_channels():
    x = surrogate_window(np.random.default_rng(0), SurrogateConfig(n_channels=5, window_len_s=0.5))
    assert x.shape == (5, 1000)
