import sys

import numpy as np
import pytest

from vecadvect import fields as fl


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid2():
    return fl.Grid.cube(2, 16)


@pytest.fixture
def grid3():
    return fl.Grid.cube(3, 16)



def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
