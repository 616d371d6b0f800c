"""Reduced order modeling of 2D quasi-geostrophic turbulence.

Pipeline: full-order barotropic vorticity solver -> POD compression ->
intrusive Galerkin ROM and non-intrusive LSTM ROM -> error/persistence
analysis.
"""

from qgrom.fields import Grid, Field2D, inner_product, laplacian, l2_grid_norm

__all__ = ["Grid", "Field2D", "inner_product", "laplacian", "l2_grid_norm"]
