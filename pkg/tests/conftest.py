import numpy as np
import pytest

from ordex.grid import make_grid


@pytest.fixture
def grid101():
    return make_grid(0.0, 1.0, 101)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def observed_ratio(fn, ns=(101, 201)):
    """Error ratio between two grid sizes for an error function ``fn(n)``."""
    e1, e2 = fn(ns[0]), fn(ns[1])
    return e1 / e2, e1, e2


#: one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
