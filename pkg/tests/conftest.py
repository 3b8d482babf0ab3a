import numpy as np
import pytest

from folin import aircraft as ac
from folin.trim import solve_trim

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def params():
    return ac.load_default_params()


@pytest.fixture(scope="session")
def trim250(params):
    return solve_trim(params, 250.0)


@pytest.fixture(scope="session")
def trim200(params):
    return solve_trim(params, 200.0)


@pytest.fixture(scope="session")
def ref2(trim250):
    return ac.ReferenceSignal(V_bar=250.0, gamma_bar=0.0)


@pytest.fixture(scope="session")
def ref3(trim250):
    return ac.ReferenceSignal(V_bar=250.0, gamma_bar=0.0, theta_bar=trim250.theta)


@pytest.fixture(scope="session")
def sys2(params, ref2):
    return ac.build_two_output_system(params, ref2)


@pytest.fixture(scope="session")
def sys3(params, ref3):
    return ac.build_three_output_system(params, ref3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
