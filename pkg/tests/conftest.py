import numpy as np
import pytest

from mgapprox import CoefficientSequence, IndexedInnovationStream, LinearIID


@pytest.fixture
def geometric_model():
    return LinearIID(CoefficientSequence.geometric(0.5, lag=40))


@pytest.fixture
def stream():
    return IndexedInnovationStream(11)


def z_ok(est, target, se, k=3.0):
    """``|est - target| <= k se`` with a tiny absolute floor for exact cases."""
    return abs(est - target) <= k * se + 1e-12 * max(1.0, abs(target))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
