import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vsr import expr

settings.register_profile("default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ideal_gas():
    """8.31 * x1 * (x2 / x3)"""
    return expr.op("mul", expr.op("mul", expr.const(8.31), expr.var(0)), expr.op("div", expr.var(1), expr.var(2)))


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
