"""Grid geometry, 2D fields, and the discrete calculus operators shared by
the solver, POD, and Galerkin modules.

Fields are node-centered (boundary nodes included) on the rectangular basin
[0,1] x [-1,1]. Arrays are indexed [ix, iy].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridMismatchError(ValueError):
    """Two fields on different grids were combined."""


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = -1.0
    y_max: float = 1.0

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"grid too coarse for stencils: {self.nx}x{self.ny}")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("degenerate domain bounds")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    def x_nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    def y_nodes(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x_nodes(), self.y_nodes(), indexing="ij")

    def trapezoid_weights(self) -> np.ndarray:
        """Tensor-product trapezoid quadrature weights, shape (nx, ny)."""
        wx = np.full(self.nx, self.dx)
        wx[0] *= 0.5
        wx[-1] *= 0.5
        wy = np.full(self.ny, self.dy)
        wy[0] *= 0.5
        wy[-1] *= 0.5
        return np.outer(wx, wy)


@dataclass
class Field2D:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.nx, self.grid.ny):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid "
                f"{self.grid.nx}x{self.grid.ny}"
            )

    @classmethod
    def zeros(cls, grid: Grid) -> "Field2D":
        return cls(grid, np.zeros((grid.nx, grid.ny)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field2D":
        X, Y = grid.mesh()
        return cls(grid, fn(X, Y))

    def copy(self) -> "Field2D":
        return Field2D(self.grid, self.values.copy())

    def __add__(self, other: "Field2D") -> "Field2D":
        _check_same_grid(self, other)
        return Field2D(self.grid, self.values + other.values)

    def __sub__(self, other: "Field2D") -> "Field2D":
        _check_same_grid(self, other)
        return Field2D(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "Field2D":
        return Field2D(self.grid, self.values * scalar)

    __rmul__ = __mul__


def _check_same_grid(f: Field2D, g: Field2D) -> None:
    if f.grid != g.grid:
        raise GridMismatchError(f"grids differ: {f.grid} vs {g.grid}")


def inner_product(f: Field2D, g: Field2D) -> float:
    """Trapezoidal approximation of the domain integral of f*g.

    Symmetric and bilinear; on fields vanishing at the boundary it agrees
    with the plain Riemann sum.
    """
    _check_same_grid(f, g)
    w = f.grid.trapezoid_weights()
    return float(np.sum(f.values * g.values * w))


def laplacian(f: Field2D) -> Field2D:
    """5-point second-order Laplacian; boundary nodes set to zero."""
    v = f.values
    dx2 = f.grid.dx**2
    dy2 = f.grid.dy**2
    out = np.zeros_like(v)
    out[1:-1, 1:-1] = (v[2:, 1:-1] - 2.0 * v[1:-1, 1:-1] + v[:-2, 1:-1]) / dx2 + (
        v[1:-1, 2:] - 2.0 * v[1:-1, 1:-1] + v[1:-1, :-2]
    ) / dy2
    return Field2D(f.grid, out)


def ddx(f: Field2D) -> Field2D:
    """Second-order central x-derivative; boundary nodes set to zero."""
    v = f.values
    out = np.zeros_like(v)
    out[1:-1, 1:-1] = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2.0 * f.grid.dx)
    return Field2D(f.grid, out)


def l2_grid_norm(f: Field2D) -> float:
    """Root mean square over all grid nodes: sqrt(sum f^2 / (nx*ny))."""
    return float(np.sqrt(np.mean(f.values**2)))
