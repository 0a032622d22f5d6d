import numpy as np
import pytest

from bvr_reliability import fit_mle, uefa_dataset

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def uefa():
    return uefa_dataset()


@pytest.fixture(scope="session")
def uefa_fit(uefa):
    return fit_mle(uefa.pairs)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
