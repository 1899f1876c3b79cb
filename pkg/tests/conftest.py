import sys

import numpy as np
import pytest

from aniso_ellipsoid import anisotropy as an


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def iso2():
    return an.isotropic_profile(2)


@pytest.fixture(scope="session")
def iso3():
    return an.isotropic_profile(3)


@pytest.fixture(scope="session")
def cos05():
    return an.cosine_profile([0.5])


@pytest.fixture(scope="session")
def zonal3():
    return an.zonal_profile([0.3])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(results):
        terminalreporter.write_line(line)
