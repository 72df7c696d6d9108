import numpy as np
import pytest

from aggko.simulation import ar1_covariance, gen_ar1_design


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ar1_data():
    """Small AR(1) design with its true covariance."""
    n, p, rho = 120, 8, 0.5
    return gen_ar1_design(n, p, rho, seed=7), ar1_covariance(p, rho)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
