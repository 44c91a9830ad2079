import numpy as np
import pytest

from slabcover import _kernels as K

ACCEPTANCE_LINES = []


@pytest.fixture(params=["numba", "numpy"] if K.HAS_NUMBA else ["numpy"])
def kernels(request):
    return K.backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
