import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from polybary.matrix import dd_trace1_polytope
from polybary.polytope import make_box, make_polygon, make_simplex

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=15, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def square():
    return make_box([0.0, 0.0], [1.0, 1.0])


@pytest.fixture(scope="session")
def interval():
    return make_box([0.0], [1.0])


@pytest.fixture(scope="session")
def triangle():
    return make_simplex(2)


@pytest.fixture(scope="session")
def hexagon():
    ang = np.linspace(0.0, 2 * np.pi, 7)[:-1] + 0.1 * np.arange(6)
    return make_polygon(np.c_[np.cos(ang), np.sin(ang)])


@pytest.fixture(scope="session")
def dd2():
    return dd_trace1_polytope(2)


@pytest.fixture(scope="session")
def dd3():
    return dd_trace1_polytope(3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria append "PASS|FAIL <label>: <detail>" lines here; they
# are repeated at the end of the run so they survive output capturing
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
