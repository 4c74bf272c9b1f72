import math

import pytest

from loadstone.grid import Grid, grid_from_nodes
from loadstone.pipeline import reference_case
from loadstone.problem import ProblemSpec


def base_spec(**changes) -> ProblemSpec:
    fields = dict(
        K0="-1", K1="-1", K2="0", K3="3", K4="t*(1 - t)", a=1.0, b=1.0, c=1.0,
        gamma=math.e, T=1.0, ell=math.pi, ell0=1.0, f="exp(t)*(2 + x)*sin(y)",
        g="0", phi0="0", eta=1.5,
    )
    fields.update(changes)
    return ProblemSpec(**fields)


@pytest.fixture
def spec():
    return base_spec()


@pytest.fixture
def small_grid():
    return grid_from_nodes(17, 1.0)


@pytest.fixture(scope="session")
def mms_case():
    return reference_case()


@pytest.fixture
def tiny_grid():
    return Grid(9, 11, 1.0)


# lines emitted by the acceptance suite, printed after the test run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
