import numpy as np
import pytest

from gradlap.grid import Disk, Points, Rectangle, Segment, build_grid


def interior_coords(grid):
    return sorted(float(c[0]) for c in grid.coords[grid.interior_mask])


def coords_of(grid, nodes):
    return sorted(tuple(round(float(v), 9) for v in grid.node_coords(n)) for n in nodes)


@pytest.fixture
def seg5():
    """Five-node segment grid: interior {-0.5, 0, 0.5}, strip {-1, 1}."""
    return build_grid(Segment(-1.0, 1.0), 0.5, 0.5, Points(((0.0,),)))


@pytest.fixture
def seg5_payoff(seg5):
    return np.where(seg5.strip_mask, 0.0, np.nan)


@pytest.fixture
def square():
    return build_grid(Rectangle((-1.0, -1.0), (1.0, 1.0)), 0.1, 0.2, Disk((0.0, 0.0), 0.5))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
