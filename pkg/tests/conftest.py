import numpy as np
import pytest

import lssgeo


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture
def record_criterion(request):
    """Record one PASS/FAIL line for the terminal summary and return the verdict."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return passed

    return record


@pytest.fixture(scope="session")
def gev_model():
    return lssgeo.gev()


@pytest.fixture(scope="session")
def gpd_model():
    return lssgeo.gpd()


@pytest.fixture(scope="session", params=["gev", "gpd"])
def model(request):
    return lssgeo.gev() if request.param == "gev" else lssgeo.gpd()


@pytest.fixture(scope="session")
def normal_model():
    base = lssgeo.custom(lambda z: np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi), name="normal")
    return lssgeo.LssModel(base)
