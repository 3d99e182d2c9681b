import numpy as np
import pytest

from heatpot import lab
from heatpot.field import GridFunction, GridSpec


@pytest.fixture(scope="session")
def corpus():
    return lab.generate_corpus(lab.CorpusSpec(seed=0, count=20))


@pytest.fixture(scope="session")
def small_corpus():
    return lab.generate_corpus(lab.CorpusSpec(seed=3, count=4))


def bump_grid(n=1, h=0.05, tau=0.025, t_lo=0.0, t_hi=1.0, centre=0.5, width=0.3):
    spec = GridSpec([-1.0] * n, [1.0] * n, t_lo, t_hi, h, tau)

    def f(X, T):
        rho2 = np.sum((X / 0.6) ** 2, axis=-1) + ((T - centre) / width) ** 2
        inside = rho2 < 1
        return np.where(inside, np.exp(1 - 1 / (1 - np.where(inside, rho2, 0))), 0.0)

    return GridFunction.from_callable(spec, f)


@pytest.fixture
def bump():
    return bump_grid()


# one line per acceptance criterion, echoed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
