import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kglattice.green import build_green  # noqa: E402
from kglattice.kleingordon import Coupling, assemble_P  # noqa: E402
from kglattice.spacetime import make_cylinder  # noqa: E402

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def flat():
    return make_cylinder(32, 64, 0.1, 0.05)


@pytest.fixture(scope="session")
def small():
    return make_cylinder(8, 12, 0.2, 0.1)


_greens = {}


def green_for(M, xi, mass):
    key = (id(M), xi, mass)
    if key not in _greens:
        _greens[key] = (M, build_green(assemble_P(M, Coupling(xi, mass))))
    return _greens[key][1]


@pytest.fixture(scope="session")
def G_massive(flat):
    return green_for(flat, 0.0, 1.0)


@pytest.fixture(scope="session")
def G_coupled(flat):
    return green_for(flat, 0.25, 1.0)


@pytest.fixture(scope="session")
def G_massless(flat):
    return green_for(flat, 0.0, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
