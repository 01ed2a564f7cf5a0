import numpy as np
import pytest

from kmd._backend import available

ACCEPTANCE_LINES = []


@pytest.fixture(params=sorted(available()))
def backend(request):
    return available()[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
