import numpy as np
import pytest

from avghjb import analytic
from avghjb.discretize import build_grid
from avghjb.model import builtin_example, constant_cost_model, ou_model
from avghjb.valuedet import Policy

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def grid():
    return build_grid(8.0, 4001)


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(6.0, 601)


@pytest.fixture(scope="session")
def example():
    return builtin_example()


@pytest.fixture(scope="session")
def ou():
    return ou_model()


@pytest.fixture(scope="session")
def constant():
    return constant_cost_model(0.5)


@pytest.fixture(scope="session")
def w_policy():
    """``w_policy(rho, grid)`` builds the selector of the analytic family on a grid."""

    def make(rho, g):
        return Policy(g, analytic.w_rho(rho, g.nodes))

    return make


@pytest.fixture(scope="session")
def v_grid():
    def make(rho, g):
        return analytic.v_rho_on_grid(rho, g)

    return make


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def gaussian(x):
    return np.exp(-x * x) / np.sqrt(np.pi)
