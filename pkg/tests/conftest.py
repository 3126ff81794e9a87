import sys

import numpy as np
import pytest

from artifact.geometry import Box, SpatialDomain, VelocityGrid
from artifact.landau import LandauOperator, PotentialParams


@pytest.fixture(scope="session")
def grid8():
    return VelocityGrid(8, 7.0)


@pytest.fixture(scope="session")
def grid16():
    return VelocityGrid(16, 7.0)


@pytest.fixture(scope="session")
def op8(grid8):
    return LandauOperator(grid8, PotentialParams(0.0))


@pytest.fixture(scope="session")
def op16(grid16):
    return LandauOperator(grid16, PotentialParams(0.0))


@pytest.fixture(scope="session")
def op16_coulomb(grid16):
    return LandauOperator(grid16, PotentialParams(-3.0))


@pytest.fixture
def line_domain():
    return SpatialDomain([Box((0, 0, 0), (1, 1, 1))], 0.125, active_dims=1)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS, key=lambda k: (isinstance(k, str), str(k).zfill(3))):
        terminalreporter.write_line(mod.RESULTS[k])
