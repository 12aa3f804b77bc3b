import warnings

import numpy as np
import pytest

from fracboltz.charfn import RadialGrid

warnings.filterwarnings("ignore", category=RuntimeWarning)


@pytest.fixture(scope="session")
def grid():
    return RadialGrid()


@pytest.fixture(scope="session")
def grid_unit():
    """Default span with a node at r = 1."""
    g = RadialGrid(1e-4, 1e2, 601)
    assert abs(g.nodes[400] - 1.0) < 1e-12
    return g


@pytest.fixture(scope="session")
def small_grid():
    return RadialGrid(1e-4, 1e2, 256)


def node_index(grid, r):
    return int(np.argmin(np.abs(grid.nodes - r)))
