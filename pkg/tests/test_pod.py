import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgrom.fields import Field2D, Grid, inner_product, laplacian
from qgrom.fom import SnapshotSet, solve_poisson
from qgrom.pod import (
    RankError,
    build_basis,
    correlation_matrix,
    jacobi_eigendecomposition,
    reconstruct_field,
    usable_rank,
)


def synthetic_snapshots(
    grid: Grid, n: int, seed: int = 0, n_components: int = 4
) -> SnapshotSet:
    """Smooth random snapshot ensemble with a nonzero mean component."""
    rng = np.random.default_rng(seed)
    X, Y = grid.mesh()
    base = np.sin(np.pi * X) * np.sin(np.pi * Y)
    modes = [
        np.sin((k + 1) * np.pi * X) * np.sin((k + 1) * np.pi * (Y + 1.0) / 2.0)
        for k in range(n_components)
    ]
    omega = np.empty((n, grid.nx, grid.ny))
    for i in range(n):
        omega[i] = base + sum(rng.standard_normal() * m for m in modes)
    mean = Field2D(grid, omega.mean(axis=0))
    return SnapshotSet(
        grid=grid,
        times=np.linspace(0.0, 1.0, n),
        omega=omega,
        omega_mean=mean,
        psi_mean=solve_poisson(mean),
    )


# ---------------------------------------------------------------------------
# Jacobi eigendecomposition

def test_jacobi_diagonal_passthrough():
    lam, v = jacobi_eigendecomposition(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(lam, [3.0, 2.0, 1.0])
    np.testing.assert_allclose(np.abs(v), np.eye(3)[:, [0, 2, 1]], atol=1e-14)


def test_jacobi_known_2x2():
    # [[2,1],[1,2]] has eigenvalues 3 and 1
    lam, v = jacobi_eigendecomposition(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(lam, [3.0, 1.0], atol=1e-12)


def test_jacobi_rejects_asymmetric():
    with pytest.raises(ValueError):
        jacobi_eigendecomposition(np.array([[1.0, 2.0], [0.0, 1.0]]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_jacobi_reconstructs_matrix(seed, n):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, n))
    a = m + m.T
    lam, v = jacobi_eigendecomposition(a)
    scale = np.linalg.norm(a) + 1.0
    assert np.linalg.norm(v @ np.diag(lam) @ v.T - a) / scale < 1e-10
    assert np.linalg.norm(v.T @ v - np.eye(n)) < 1e-10
    assert np.all(np.diff(lam) <= 1e-12)  # descending


# ---------------------------------------------------------------------------
# POD pipeline

@pytest.fixture(scope="module")
def basis_case():
    grid = Grid(33, 65)
    snaps = synthetic_snapshots(grid, 20, seed=1)
    return snaps, build_basis(snaps, 4)


def test_correlation_symmetry_and_trace(basis_case):
    snaps, basis = basis_case
    a = correlation_matrix(snaps)
    assert np.array_equal(a, a.T)
    # sum of eigenvalues equals the trace
    assert basis.lambdas.sum() == pytest.approx(np.trace(a), rel=1e-10)


def test_eigenvalues_descending_nonnegative(basis_case):
    _, basis = basis_case
    lam = basis.lambdas
    assert np.all(np.diff(lam) <= 1e-10 * lam[0])
    assert lam.min() > -1e-10 * lam[0]


def test_mode_orthonormality(basis_case):
    _, basis = basis_case
    gram = np.empty((basis.r, basis.r))
    for i in range(basis.r):
        for j in range(basis.r):
            gram[i, j] = inner_product(basis.phi_field(i), basis.phi_field(j))
    assert np.abs(gram - np.eye(basis.r)).max() < 1e-8


def test_mode_sign_convention(basis_case):
    _, basis = basis_case
    for k in range(basis.r):
        flat = basis.phi[k].ravel()
        assert flat[np.argmax(np.abs(flat))] > 0


def test_theta_solves_poisson(basis_case):
    _, basis = basis_case
    for k in range(basis.r):
        res = laplacian(basis.theta_field(k)).values[1:-1, 1:-1]
        np.testing.assert_allclose(
            res, -basis.phi[k][1:-1, 1:-1], atol=1e-9 * np.abs(basis.phi[k]).max()
        )


def test_coefficient_energy_identity(basis_case):
    # sum_n a_k(t_n)^2 = lambda_k for the training snapshots
    _, basis = basis_case
    energy = (basis.a_train**2).sum(axis=1)
    np.testing.assert_allclose(energy, basis.lambdas[: basis.r], rtol=1e-8)


def test_full_rank_reconstruction():
    grid = Grid(33, 65)
    snaps = synthetic_snapshots(grid, 12, seed=2)
    rank = usable_rank(jacobi_eigendecomposition(correlation_matrix(snaps))[0])
    basis = build_basis(snaps, rank)
    worst = 0.0
    for n in range(snaps.n_snapshots):
        rec = reconstruct_field(basis.a_train[:, n], basis, "omega")
        num = np.abs(rec.values - snaps.omega[n]).max()
        den = np.abs(snaps.omega[n]).max()
        worst = max(worst, num / den)
    assert worst < 1e-6


def test_rank_error():
    grid = Grid(17, 33)
    snaps = synthetic_snapshots(grid, 8, seed=3)
    with pytest.raises(RankError):
        build_basis(snaps, 8)  # 5 independent components at most (4 modes + base noise)


def test_reconstruct_validates_shape(basis_case):
    _, basis = basis_case
    with pytest.raises(ValueError):
        reconstruct_field(np.zeros(basis.r + 1), basis, "omega")
    with pytest.raises(ValueError):
        reconstruct_field(np.zeros(basis.r), basis, "vorticity")
