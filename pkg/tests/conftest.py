import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("ci", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture(scope="session")
def bank():
    from neurosoc.dsp import FirBank
    return FirBank.default(2000.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus():
    """4-channel, 4-event surrogate recording with its feature table."""
    from neurosoc.data import SeizureCorpusConfig, seizure_corpus
    from neurosoc.dsp import FirBank
    from neurosoc.pipeline import dataset_windows, default_specs, feature_table
    cfg = SeizureCorpusConfig(n_channels=4, duration_s=120.0, n_events=4, event_len_s=(8.0, 14.0),
                              focal_channels=(1, 2), seed=3)
    ds = seizure_corpus(cfg)
    ws = dataset_windows(ds, 1.0)
    bank = FirBank.default(2000.0)
    table = feature_table(ws, default_specs(4), bank)
    return ds, ws, table, bank


@pytest.fixture(scope="session")
def full_corpus(tmp_path_factory):
    """Default 8-channel, 10-event surrogate corpus (feature extraction ~20 s)."""
    from neurosoc.data import SeizureCorpusConfig, seizure_corpus
    from neurosoc.dsp import FirBank
    from neurosoc.pipeline import dataset_windows, default_specs, feature_table
    ds = seizure_corpus(SeizureCorpusConfig(seed=0))
    ws = dataset_windows(ds, 1.0)
    bank = FirBank.default(2000.0)
    table = feature_table(ws, default_specs(8), bank)
    return ds, ws, table, bank


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
