import numpy as np
import pytest

from rkhs_tikhonov import ForwardOp, GaussianTheta, Grid, H1Space, Kernel

# Lines appended by the acceptance suite; echoed in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def sob():
    return Kernel.sobolev1d(1)


@pytest.fixture(scope="session")
def grid64():
    return Grid.trapezoid(0.0, 1.0, 64)


@pytest.fixture(scope="session")
def grid128():
    return Grid.trapezoid(0.0, 1.0, 128)


@pytest.fixture(scope="session")
def space64(grid64, sob):
    return H1Space(grid64, sob)


@pytest.fixture(scope="session")
def quad64(grid64, sob):
    return ForwardOp("quadratic_integral", grid64, GaussianTheta(0.05, 1.0, True), sob)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
