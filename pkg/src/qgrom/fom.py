"""Full-order solver for the forced-dissipative barotropic vorticity equation
on the single-gyre basin, with free-slip walls (psi = omega = 0).

d(omega)/dt = -J(omega, psi) + (1/Ro) d(psi)/dx + (1/Re) lap(omega)
              + (1/Ro) sin(pi y),        lap(psi) = -omega.

Time stepping is explicit TVD-RK3 with the Poisson equation re-solved by a
direct sine-transform method at every substage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft
from numba import njit

from qgrom.fields import Field2D, Grid, _check_same_grid

DIVERGENCE_LIMIT = 1e8


class DivergenceError(RuntimeError):
    """Explicit integration blew up (max|omega| above the guard threshold)."""

    def __init__(self, time: float):
        super().__init__(f"solution diverged at t={time:.6g} (max|omega| > {DIVERGENCE_LIMIT:g})")
        self.time = time


@dataclass
class FomConfig:
    grid: Grid
    re: float
    ro: float
    dt: float
    t_start: float
    t_end: float
    snapshot_t0: float
    snapshot_t1: float
    n_snapshots: int
    seed_perturbation_amplitude: float = 0.0
    # optional long-window running mean of the solution, for reference means
    # that extend past the snapshot window
    mean_t0: Optional[float] = None
    mean_t1: Optional[float] = None

    def __post_init__(self):
        if self.re <= 0 or self.ro <= 0:
            raise ValueError("re and ro must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not (self.t_start < self.snapshot_t0 < self.snapshot_t1 <= self.t_end):
            raise ValueError("need t_start < snapshot_t0 < snapshot_t1 <= t_end")
        if self.n_snapshots < 2:
            raise ValueError("need at least 2 snapshots")


@dataclass
class SnapshotSet:
    grid: Grid
    times: np.ndarray                      # (N,)
    omega: np.ndarray                      # (N, nx, ny)
    omega_mean: Field2D
    psi_mean: Field2D
    # time-average over [mean_t0, mean_t1] when configured; otherwise None
    omega_mean_ref: Optional[Field2D] = None
    psi_mean_ref: Optional[Field2D] = None

    @property
    def n_snapshots(self) -> int:
        return len(self.times)

    def omega_field(self, n: int) -> Field2D:
        return Field2D(self.grid, self.omega[n])


# ---------------------------------------------------------------------------
# discrete operators

def arakawa_jacobian(omega: Field2D, psi: Field2D) -> Field2D:
    """Energy- and enstrophy-conserving Arakawa Jacobian, J = (J1+J2+J3)/3,
    approximating psi_y omega_x - psi_x omega_y. Boundary nodes are zero.
    """
    _check_same_grid(omega, psi)
    out = np.zeros_like(omega.values)
    out[1:-1, 1:-1] = _arakawa_interior(
        omega.values, psi.values, omega.grid.dx, omega.grid.dy
    )
    return Field2D(omega.grid, out)


def _arakawa_interior(p: np.ndarray, q: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Arakawa discretization of J(p,q) = p_x q_y - p_y q_x on interior nodes."""
    j1 = (p[2:, 1:-1] - p[:-2, 1:-1]) * (q[1:-1, 2:] - q[1:-1, :-2]) - (
        p[1:-1, 2:] - p[1:-1, :-2]
    ) * (q[2:, 1:-1] - q[:-2, 1:-1])
    j2 = (
        p[2:, 1:-1] * (q[2:, 2:] - q[2:, :-2])
        - p[:-2, 1:-1] * (q[:-2, 2:] - q[:-2, :-2])
        - p[1:-1, 2:] * (q[2:, 2:] - q[:-2, 2:])
        + p[1:-1, :-2] * (q[2:, :-2] - q[:-2, :-2])
    )
    j3 = (
        p[2:, 2:] * (q[1:-1, 2:] - q[2:, 1:-1])
        - p[:-2, :-2] * (q[:-2, 1:-1] - q[1:-1, :-2])
        - p[:-2, 2:] * (q[1:-1, 2:] - q[:-2, 1:-1])
        + p[2:, :-2] * (q[2:, 1:-1] - q[1:-1, :-2])
    )
    return (j1 + j2 + j3) / (12.0 * dx * dy)


@njit(cache=True)
def _tri_factor(diag: np.ndarray, off: float, mx: int, my: int) -> np.ndarray:  # pragma: no cover
    """Reciprocal pivots of the constant-coefficient tridiagonal factorization.
    One system per y-wavenumber (column); the recurrence runs over x.
    """
    inv_piv = np.empty((mx, my))
    for j in range(my):
        inv_piv[0, j] = 1.0 / diag[j]
    for i in range(1, mx):
        for j in range(my):
            inv_piv[i, j] = 1.0 / (diag[j] - off * off * inv_piv[i - 1, j])
    return inv_piv


@njit(cache=True)
def _tri_solve(rhs: np.ndarray, inv_piv: np.ndarray, off: float, out: np.ndarray) -> None:  # pragma: no cover
    mx, my = rhs.shape
    for j in range(my):
        out[0, j] = rhs[0, j] * inv_piv[0, j]
    for i in range(1, mx):
        for j in range(my):
            out[i, j] = (rhs[i, j] - off * out[i - 1, j]) * inv_piv[i, j]
    for i in range(mx - 2, -1, -1):
        for j in range(my):
            out[i, j] -= inv_piv[i, j] * off * out[i + 1, j]


class _PoissonSolver:
    """Direct Dirichlet Poisson solver: DST-I diagonalization in y combined
    with a precomputed Thomas solve of the resulting tridiagonal systems in x.
    Solves the 5-point discrete system to machine precision.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        mx = grid.nx - 2
        my = grid.ny - 2
        ky = np.arange(1, my + 1)
        lam_y = (2.0 * np.cos(np.pi * ky / (my + 1)) - 2.0) / grid.dy**2
        self._off = 1.0 / grid.dx**2
        diag = lam_y - 2.0 / grid.dx**2
        self._inv_piv = _tri_factor(diag, self._off, mx, my)

    def solve(self, omega_values: np.ndarray) -> np.ndarray:
        """Return psi with lap(psi) = -omega, psi = 0 on the boundary."""
        rhs_hat = scipy.fft.dst(-omega_values[1:-1, 1:-1], type=1, axis=1)
        psi_hat = np.empty_like(rhs_hat)
        _tri_solve(rhs_hat, self._inv_piv, self._off, psi_hat)
        psi = np.zeros_like(omega_values)
        psi[1:-1, 1:-1] = scipy.fft.idst(psi_hat, type=1, axis=1)
        return psi


_poisson_cache: dict[Grid, _PoissonSolver] = {}


def _poisson(grid: Grid) -> _PoissonSolver:
    solver = _poisson_cache.get(grid)
    if solver is None:
        solver = _poisson_cache[grid] = _PoissonSolver(grid)
    return solver


def solve_poisson(omega: Field2D) -> Field2D:
    """Solve lap(psi) = -omega with homogeneous Dirichlet walls (direct)."""
    if not np.all(np.isfinite(omega.values)):
        raise ValueError("non-finite vorticity passed to Poisson solver")
    return Field2D(omega.grid, _poisson(omega.grid).solve(omega.values))


def _forcing(grid: Grid) -> np.ndarray:
    _, Y = grid.mesh()
    return np.sin(np.pi * Y)


@njit(cache=True)
def _rhs_kernel(w, psi, dx, dy, re, ro, forcing, out):  # pragma: no cover
    nx, ny = w.shape
    c_j = 1.0 / (12.0 * dx * dy)
    cdx2 = 1.0 / (dx * dx)
    cdy2 = 1.0 / (dy * dy)
    c2dx = 1.0 / (2.0 * dx)
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            j1 = (w[i + 1, j] - w[i - 1, j]) * (psi[i, j + 1] - psi[i, j - 1]) - (
                w[i, j + 1] - w[i, j - 1]
            ) * (psi[i + 1, j] - psi[i - 1, j])
            j2 = (
                w[i + 1, j] * (psi[i + 1, j + 1] - psi[i + 1, j - 1])
                - w[i - 1, j] * (psi[i - 1, j + 1] - psi[i - 1, j - 1])
                - w[i, j + 1] * (psi[i + 1, j + 1] - psi[i - 1, j + 1])
                + w[i, j - 1] * (psi[i + 1, j - 1] - psi[i - 1, j - 1])
            )
            j3 = (
                w[i + 1, j + 1] * (psi[i, j + 1] - psi[i + 1, j])
                - w[i - 1, j - 1] * (psi[i - 1, j] - psi[i, j - 1])
                - w[i - 1, j + 1] * (psi[i, j + 1] - psi[i - 1, j])
                + w[i + 1, j - 1] * (psi[i + 1, j] - psi[i, j - 1])
            )
            jac = (j1 + j2 + j3) * c_j
            lap = (w[i + 1, j] - 2.0 * w[i, j] + w[i - 1, j]) * cdx2 + (
                w[i, j + 1] - 2.0 * w[i, j] + w[i, j - 1]
            ) * cdy2
            psix = (psi[i + 1, j] - psi[i - 1, j]) * c2dx
            out[i, j] = -jac + psix / ro + lap / re + forcing[i, j] / ro


def _rhs_values(
    w: np.ndarray,
    psi: np.ndarray,
    grid: Grid,
    re: float,
    ro: float,
    forcing: np.ndarray,
) -> np.ndarray:
    out = np.zeros_like(w)
    _rhs_kernel(w, psi, grid.dx, grid.dy, re, ro, forcing, out)
    return out


def bve_rhs(omega: Field2D, psi: Field2D, cfg: FomConfig) -> Field2D:
    """Right-hand side of the vorticity equation; boundary nodes zero."""
    _check_same_grid(omega, psi)
    forcing = _forcing(omega.grid)
    return Field2D(
        omega.grid,
        _rhs_values(omega.values, psi.values, omega.grid, cfg.re, cfg.ro, forcing),
    )


def step_rk3(omega: Field2D, cfg: FomConfig, t: float = 0.0) -> Field2D:
    """One explicit TVD-RK3 step; psi re-solved at each substage."""
    w = _step_rk3_values(omega.values, omega.grid, cfg, _forcing(omega.grid))
    if np.max(np.abs(w)) > DIVERGENCE_LIMIT:
        raise DivergenceError(t + cfg.dt)
    return Field2D(omega.grid, w)


@njit(cache=True)
def _stage_kernel(w0, v, psi, dx, dy, re, ro, forcing, a, b, dt, out):  # pragma: no cover
    """Fused RK substage: out = a*w0 + b*(v + dt*rhs(v, psi)) on the interior."""
    nx, ny = v.shape
    c_j = 1.0 / (12.0 * dx * dy)
    cdx2 = 1.0 / (dx * dx)
    cdy2 = 1.0 / (dy * dy)
    c2dx = 1.0 / (2.0 * dx)
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            j1 = (v[i + 1, j] - v[i - 1, j]) * (psi[i, j + 1] - psi[i, j - 1]) - (
                v[i, j + 1] - v[i, j - 1]
            ) * (psi[i + 1, j] - psi[i - 1, j])
            j2 = (
                v[i + 1, j] * (psi[i + 1, j + 1] - psi[i + 1, j - 1])
                - v[i - 1, j] * (psi[i - 1, j + 1] - psi[i - 1, j - 1])
                - v[i, j + 1] * (psi[i + 1, j + 1] - psi[i - 1, j + 1])
                + v[i, j - 1] * (psi[i + 1, j - 1] - psi[i - 1, j - 1])
            )
            j3 = (
                v[i + 1, j + 1] * (psi[i, j + 1] - psi[i + 1, j])
                - v[i - 1, j - 1] * (psi[i - 1, j] - psi[i, j - 1])
                - v[i - 1, j + 1] * (psi[i, j + 1] - psi[i - 1, j])
                + v[i + 1, j - 1] * (psi[i + 1, j] - psi[i, j - 1])
            )
            jac = (j1 + j2 + j3) * c_j
            lap = (v[i + 1, j] - 2.0 * v[i, j] + v[i - 1, j]) * cdx2 + (
                v[i, j + 1] - 2.0 * v[i, j] + v[i, j - 1]
            ) * cdy2
            psix = (psi[i + 1, j] - psi[i - 1, j]) * c2dx
            rhs = -jac + psix / ro + lap / re + forcing[i, j] / ro
            out[i, j] = a * w0[i, j] + b * (v[i, j] + dt * rhs)


def _step_rk3_values(
    w: np.ndarray, grid: Grid, cfg: FomConfig, forcing: np.ndarray
) -> np.ndarray:
    dt = cfg.dt
    solver = _poisson(grid)
    dx, dy = grid.dx, grid.dy
    w1 = np.zeros_like(w)
    _stage_kernel(w, w, solver.solve(w), dx, dy, cfg.re, cfg.ro, forcing, 0.0, 1.0, dt, w1)
    w2 = np.zeros_like(w)
    _stage_kernel(w, w1, solver.solve(w1), dx, dy, cfg.re, cfg.ro, forcing, 0.75, 0.25, dt, w2)
    out = np.zeros_like(w)
    _stage_kernel(
        w, w2, solver.solve(w2), dx, dy, cfg.re, cfg.ro, forcing, 1.0 / 3.0, 2.0 / 3.0, dt, out
    )
    return out


def run_fom(cfg: FomConfig) -> SnapshotSet:
    """Integrate from rest and sample vorticity snapshots.

    Snapshots are taken at the discrete step nearest each target time of the
    uniform plan linspace(snapshot_t0, snapshot_t1, n_snapshots); the `times`
    array stores the nominal plan. The stored mean is the snapshot average;
    an optional running mean over [mean_t0, mean_t1] is kept alongside.
    """
    grid = cfg.grid
    forcing = _forcing(grid)
    solver = _poisson(grid)

    w = np.zeros((grid.nx, grid.ny))
    if cfg.seed_perturbation_amplitude != 0.0:
        # even in y so it breaks the odd symmetry of the double-gyre base flow
        X, Y = grid.mesh()
        w += (
            cfg.seed_perturbation_amplitude
            * np.sin(np.pi * X)
            * np.sin(np.pi * (Y - grid.y_min) / (grid.y_max - grid.y_min))
        )

    n_steps = int(round((cfg.t_end - cfg.t_start) / cfg.dt))
    targets = np.linspace(cfg.snapshot_t0, cfg.snapshot_t1, cfg.n_snapshots)
    target_steps = np.rint((targets - cfg.t_start) / cfg.dt).astype(int)

    snaps = np.empty((cfg.n_snapshots, grid.nx, grid.ny))
    next_snap = 0

    want_ref = cfg.mean_t0 is not None and cfg.mean_t1 is not None
    ref_sum = np.zeros_like(w) if want_ref else None
    ref_count = 0

    for step in range(n_steps + 1):
        t = cfg.t_start + step * cfg.dt
        while next_snap < cfg.n_snapshots and target_steps[next_snap] == step:
            snaps[next_snap] = w
            next_snap += 1
        if want_ref and cfg.mean_t0 - 1e-12 <= t <= cfg.mean_t1 + 1e-12:
            ref_sum += w
            ref_count += 1
        if step < n_steps:
            w = _step_rk3_values(w, grid, cfg, forcing)
            if np.max(np.abs(w)) > DIVERGENCE_LIMIT:
                raise DivergenceError(t + cfg.dt)

    if next_snap < cfg.n_snapshots:
        raise ValueError("snapshot plan extends past t_end")

    omega_mean = Field2D(grid, snaps.mean(axis=0))
    psi_mean = Field2D(grid, solver.solve(omega_mean.values))
    omega_ref = psi_ref = None
    if want_ref and ref_count > 0:
        omega_ref = Field2D(grid, ref_sum / ref_count)
        psi_ref = Field2D(grid, solver.solve(omega_ref.values))

    return SnapshotSet(
        grid=grid,
        times=targets,
        omega=snaps,
        omega_mean=omega_mean,
        psi_mean=psi_mean,
        omega_mean_ref=omega_ref,
        psi_mean_ref=psi_ref,
    )
