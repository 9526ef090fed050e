import sys
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from freqswap.config import shipped_params
from freqswap.filters import default_bank
from freqswap.pure import default_tau
from freqswap.spectral import default_grids

settings.register_profile(
    "freqswap", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("freqswap")


@pytest.fixture(scope="session")
def params():
    return shipped_params()


@pytest.fixture(scope="session")
def grids(params):
    return default_grids(params)


@pytest.fixture(scope="session")
def delta_bank():
    return default_bank("delta")


@pytest.fixture(scope="session")
def gauss_bank():
    return default_bank("gaussian", 1.5, 8)


@pytest.fixture(scope="session")
def tau(params):
    return default_tau(params)


def omegas(bank, j, k):
    return bank.centers[bank.index(j)], bank.centers[bank.index(k)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[n])
