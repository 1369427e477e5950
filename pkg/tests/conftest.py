import numpy as np
import pytest

from blockqn import problems


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(scope="session")
def rosen20():
    return problems.rosenbrock(problems.RosenbrockSpec(20, 100.0))


@pytest.fixture(scope="session")
def rosen100():
    return problems.rosenbrock(problems.RosenbrockSpec(100, 100.0))


def diag_quadratic(diag):
    diag = np.asarray(diag, dtype=float)
    return problems.quadratic(problems.QuadraticSpec(np.diag(diag), np.zeros(len(diag))))


def random_symmetric(rng, n):
    A = rng.standard_normal((n, n))
    return 0.5 * (A + A.T)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
