import numpy as np
import pytest

from solenoid.dynamics import SystemParams
from solenoid.trigpoly import TrigPoly


@pytest.fixture
def cos_system():
    return SystemParams(2, 0.5, TrigPoly.cos(1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)
