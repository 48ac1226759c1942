import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mcmc import McmcSettings  # noqa: E402
from model import DEFAULT_RTMG  # noqa: E402
from sim import simulate_rtmg  # noqa: E402


@pytest.fixture(scope="session")
def sim_path():
    return simulate_rtmg(DEFAULT_RTMG, 300, seed=11)


@pytest.fixture(scope="session")
def small_series(sim_path):
    return sim_path.series


@pytest.fixture
def tiny_settings():
    return McmcSettings(epoch_length=300, imh_length=200, discard=50, max_epochs=3, adapt_every=50)
