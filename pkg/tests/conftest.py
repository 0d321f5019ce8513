import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from omarray.coupling import CavityConfig
from omarray.spectra import DetectionConfig
from omarray.superlattice import LatticeConfig

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

KHZ = 2 * np.pi * 1e3


@pytest.fixture(scope="session")
def lattice():
    return LatticeConfig.default()


@pytest.fixture(scope="session")
def cavity():
    return CavityConfig()


@pytest.fixture(scope="session")
def detection():
    return DetectionConfig()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
