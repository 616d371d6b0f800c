"""Method-of-snapshots POD: temporal correlation matrix, Jacobi
eigendecomposition, orthonormal vorticity/streamfunction mode pairs, and the
forward/inverse modal-coefficient transforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from qgrom.fields import Field2D, Grid, inner_product
from qgrom.fom import SnapshotSet, solve_poisson

RANK_CUTOFF = 1e-12      # relative to the leading eigenvalue
JACOBI_TOL = 1e-12       # off-diagonal Frobenius norm, relative to ||A||_F
JACOBI_MAX_SWEEPS = 100


class RankError(ValueError):
    """More modes requested than the data numerically supports."""

    def __init__(self, requested: int, usable: int):
        super().__init__(
            f"requested {requested} modes but only {usable} eigenvalues exceed "
            f"the rank cutoff"
        )
        self.requested = requested
        self.usable = usable


@dataclass
class PodBasis:
    grid: Grid
    r: int
    lambdas: np.ndarray        # all N eigenvalues, descending
    phi: np.ndarray            # (r, nx, ny) vorticity modes
    theta: np.ndarray          # (r, nx, ny) streamfunction modes
    a_train: np.ndarray        # (r, N) modal coefficients of the snapshots
    omega_mean: Field2D
    psi_mean: Field2D

    @property
    def n_snapshots(self) -> int:
        return len(self.lambdas)

    def phi_field(self, k: int) -> Field2D:
        return Field2D(self.grid, self.phi[k])

    def theta_field(self, k: int) -> Field2D:
        return Field2D(self.grid, self.theta[k])


def correlation_matrix(snapshots: SnapshotSet) -> np.ndarray:
    """N x N matrix of inner products of mean-subtracted snapshots.

    Computed from the upper triangle and mirrored, so the result is exactly
    symmetric.
    """
    n = snapshots.n_snapshots
    if n < 2:
        raise ValueError("need at least 2 snapshots")
    grid = snapshots.grid
    w = grid.trapezoid_weights().ravel()
    fluct = (snapshots.omega - snapshots.omega_mean.values).reshape(n, -1)
    m = (fluct * w) @ fluct.T
    upper = np.triu(m)
    return upper + np.triu(m, 1).T


def jacobi_eigendecomposition(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi rotations for a symmetric matrix.

    Sweeps rows in order, rotating away off-diagonal entries above a
    per-sweep threshold, until the off-diagonal Frobenius norm drops below
    JACOBI_TOL * ||A||_F. Returns eigenvalues descending and the matching
    orthonormal eigenvector columns.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    norm = np.linalg.norm(a)
    asym = np.abs(a - a.T).max()
    if norm > 0 and asym > 1e-9 * norm:
        raise ValueError(f"matrix not symmetric (max asymmetry {asym:.3g})")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    if norm == 0.0:
        return np.zeros(n), v

    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2.0)
        if off < JACOBI_TOL * norm:
            break
        # threshold pivoting: entries already below the convergence budget
        # are left alone this sweep
        thresh = JACOBI_TOL * norm / n
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= thresh:
                    continue
                app, aqq = a[p, p], a[q, q]
                tau = (aqq - app) / (2.0 * apq)
                if tau == 0.0:
                    t = 1.0
                else:
                    t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                _rotate(a, v, p, q, c, s)
    else:
        raise RuntimeError("Jacobi iteration failed to converge")

    lambdas = np.diag(a).copy()
    order = np.argsort(lambdas)[::-1]
    return lambdas[order], v[:, order]


def _rotate(a: np.ndarray, v: np.ndarray, p: int, q: int, c: float, s: float) -> None:
    rows_p = a[p, :].copy()
    rows_q = a[q, :].copy()
    a[p, :] = c * rows_p - s * rows_q
    a[q, :] = s * rows_p + c * rows_q
    cols_p = a[:, p].copy()
    cols_q = a[:, q].copy()
    a[:, p] = c * cols_p - s * cols_q
    a[:, q] = s * cols_p + c * cols_q
    vp = v[:, p].copy()
    vq = v[:, q].copy()
    v[:, p] = c * vp - s * vq
    v[:, q] = s * vp + c * vq


def usable_rank(lambdas: np.ndarray) -> int:
    if len(lambdas) == 0 or lambdas[0] <= 0:
        return 0
    return int(np.sum(lambdas > RANK_CUTOFF * lambdas[0]))


def build_vorticity_modes(
    snapshots: SnapshotSet, lambdas: np.ndarray, v: np.ndarray, r: int
) -> np.ndarray:
    """Modes phi_k = (1/sqrt(lambda_k)) sum_n v[n,k] * fluctuation_n,
    sign-fixed so the largest-magnitude nodal value is positive.
    """
    usable = usable_rank(lambdas)
    if r > usable:
        raise RankError(r, usable)
    n = snapshots.n_snapshots
    fluct = (snapshots.omega - snapshots.omega_mean.values).reshape(n, -1)
    phi = (v[:, :r].T @ fluct) / np.sqrt(lambdas[:r])[:, None]
    for k in range(r):
        peak = phi[k][np.argmax(np.abs(phi[k]))]
        if peak < 0:
            phi[k] *= -1.0
    return phi.reshape(r, snapshots.grid.nx, snapshots.grid.ny)


def build_streamfunction_modes(phi: np.ndarray, grid: Grid) -> np.ndarray:
    """theta_k solves lap(theta_k) = -phi_k with Dirichlet walls."""
    theta = np.empty_like(phi)
    for k in range(phi.shape[0]):
        theta[k] = solve_poisson(Field2D(grid, phi[k])).values
    return theta


def project_coefficients(snapshots: SnapshotSet, phi: np.ndarray) -> np.ndarray:
    """a[k, n] = <omega(t_n) - omega_mean; phi_k>."""
    n = snapshots.n_snapshots
    grid = snapshots.grid
    if phi.shape[1:] != (grid.nx, grid.ny):
        raise ValueError("mode shape does not match snapshot grid")
    w = grid.trapezoid_weights().ravel()
    fluct = (snapshots.omega - snapshots.omega_mean.values).reshape(n, -1)
    return (phi.reshape(phi.shape[0], -1) * w) @ fluct.T


def build_basis(snapshots: SnapshotSet, r: int) -> PodBasis:
    """Run the full basis construction pipeline on a snapshot set."""
    a_mat = correlation_matrix(snapshots)
    lambdas, v = jacobi_eigendecomposition(a_mat)
    phi = build_vorticity_modes(snapshots, lambdas, v, r)
    theta = build_streamfunction_modes(phi, snapshots.grid)
    a_train = project_coefficients(snapshots, phi)
    return PodBasis(
        grid=snapshots.grid,
        r=r,
        lambdas=lambdas,
        phi=phi,
        theta=theta,
        a_train=a_train,
        omega_mean=snapshots.omega_mean,
        psi_mean=snapshots.psi_mean,
    )


def reconstruct_field(a_at_t: np.ndarray, basis: PodBasis, which: str) -> Field2D:
    """Mean field plus the modal expansion: omega or psi reconstruction."""
    a_at_t = np.asarray(a_at_t, dtype=np.float64)
    if a_at_t.shape != (basis.r,):
        raise ValueError(f"expected {basis.r} coefficients, got {a_at_t.shape}")
    if which == "omega":
        mean, modes = basis.omega_mean, basis.phi
    elif which == "psi":
        mean, modes = basis.psi_mean, basis.theta
    else:
        raise ValueError("which must be 'omega' or 'psi'")
    values = mean.values + np.tensordot(a_at_t, modes, axes=1)
    return Field2D(basis.grid, values)
