import math

import pytest

from rydpair.atomic_structure import AtomicState, load_defect_table
from rydpair.pair_interaction import PairState, build_pair_basis

OMEGA = 2 * math.pi * 1.2  # rad/us


@pytest.fixture(scope="session")
def defects():
    return load_defect_table()


@pytest.fixture(scope="session")
def target():
    s = AtomicState(61, 2, 1.5, 1.5)
    return PairState(s, s)


@pytest.fixture(scope="session")
def small_basis(target):
    """Reduced pair basis (n +- 2, 1 GHz): fast, keeps the dominant channels."""
    return build_pair_basis(target, energy_window=1.0, n_window=2)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
