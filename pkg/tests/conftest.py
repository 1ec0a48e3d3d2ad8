import sys

import numpy as np
import pytest

from designs import toy_panel
from didmulti.panel import design_stats


@pytest.fixture
def toy():
    return toy_panel()


@pytest.fixture
def toy_stats(toy):
    return design_stats(toy)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance.RESULTS[n])
