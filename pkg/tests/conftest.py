import numpy as np
import pytest

from latticeh2 import Controller, LatticeShape, SystemSpec, absolute_kernel, nearest_neighbor_kernel


def unit_spec(d=1, L=8, controller=Controller.STATIC, c0=1.0, epsilon=0.0, a=None):
    """Unit nearest-neighbor f and a, g0 = 1."""
    needs_a = Controller(controller) in (Controller.DAPI_NOISELESS, Controller.DAPI_NOISY)
    return SystemSpec(
        shape=LatticeShape(d, L),
        f=nearest_neighbor_kernel(d),
        g=absolute_kernel(d, 1.0),
        controller=controller,
        a=(a or nearest_neighbor_kernel(d)) if needs_a else None,
        c0=c0,
        epsilon=epsilon,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
