import numpy as np
import pytest

from tsr.schedule import Schedule

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def vp():
    return Schedule.vp()


@pytest.fixture
def flow():
    return Schedule.flow()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
