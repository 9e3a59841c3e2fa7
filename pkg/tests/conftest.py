import numpy as np
import pytest

from rstc.config import PlatoonConfig


@pytest.fixture(scope="session")
def cfg():
    return PlatoonConfig()


@pytest.fixture(scope="session")
def platoon(cfg):
    return cfg.platoon()


@pytest.fixture(scope="session")
def mats(platoon):
    return platoon.matrices()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
