import numpy as np
import pytest

from qgrom.fields import Field2D, Grid


@pytest.fixture
def small_grid():
    return Grid(17, 33)


def random_field(grid: Grid, rng: np.random.Generator, pad: int = 0) -> Field2D:
    """Random field, zeroed on `pad` outermost node rings."""
    vals = rng.standard_normal((grid.nx, grid.ny))
    for p in range(pad):
        vals[p, :] = vals[-1 - p, :] = 0.0
        vals[:, p] = vals[:, -1 - p] = 0.0
    return Field2D(grid, vals)
