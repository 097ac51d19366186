import numpy as np
import pytest

from shocklab.model import endstates, make_model
from shocklab.profile import solve_profile


@pytest.fixture(scope="session")
def burgers():
    return make_model("burgers")


@pytest.fixture(scope="session")
def psystem():
    return make_model("p-system")


@pytest.fixture(scope="session")
def burgers_profile(burgers):
    return solve_profile(burgers)


@pytest.fixture(scope="session")
def psystem_profile(psystem):
    return solve_profile(psystem)


@pytest.fixture(scope="session")
def psystem_ends(psystem):
    return endstates(psystem)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = {}


def record(number, passed, detail):
    """Store one acceptance line; printed again in the terminal summary."""
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
