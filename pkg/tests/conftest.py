import numpy as np
import pytest

from pwapsf.pwa_core import ClosedLoopPwa, ClosedLoopRegion, Polyhedron
from pwapsf.simlab.scenarios import pendulum_boundary_scenario, pendulum_scenario, rooms_scenario


@pytest.fixture(scope="session")
def pendulum():
    return pendulum_scenario()


@pytest.fixture(scope="session")
def rooms():
    return rooms_scenario()


@pytest.fixture(scope="session")
def boundary():
    return pendulum_boundary_scenario()


def _quadrant(Hx, D):
    return ClosedLoopRegion(Polyhedron(Hx, [0.0, 0.0]), D, [1.0, 0.0])


@pytest.fixture(scope="session")
def quadrants():
    """Continuous four-quadrant system whose flow slides along the positive x1-axis.

    Regions: 0 = {x1 <= 0, x2 >= 0}, 1 = {x1 >= 0, x2 >= 0},
             2 = {x1 >= 0, x2 <= 0}, 3 = {x1 <= 0, x2 <= 0}.
    """
    return ClosedLoopPwa([
        _quadrant([[1, 0], [0, -1]], [[0, 0], [1, 1]]),
        _quadrant([[-1, 0], [0, -1]], [[0, 0], [0, 1]]),
        _quadrant([[-1, 0], [0, 1]], [[0, 0], [0, -1]]),
        _quadrant([[1, 0], [0, 1]], [[0, 0], [1, -1]]),
    ])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE = {}


def record(k, passed, detail):
    ACCEPTANCE[k] = (bool(passed), detail)
    print(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
