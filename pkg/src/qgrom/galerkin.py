"""Intrusive Galerkin ROM: offline assembly of the constant/linear/quadratic
tensors and online integration of the resulting low-dimensional ODE system.

da_k/dt = b[k] + sum_i l[k,i] a_i + sum_ij n[k,i,j] a_i a_j

The quadratic tensor keeps its index roles (i: vorticity mode, j:
streamfunction mode); no symmetrization is applied.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from qgrom.fields import Field2D, ddx, laplacian
from qgrom.fom import arakawa_jacobian
from qgrom.pod import PodBasis

COEFF_DIVERGENCE_LIMIT = 1e8


@dataclass
class GalerkinTensors:
    r: int
    re: float
    ro: float
    b: np.ndarray       # (r,)
    l: np.ndarray       # (r, r): l[k, i]
    n: np.ndarray       # (r, r, r): n[k, i, j]

    def __post_init__(self):
        if not (
            np.all(np.isfinite(self.b))
            and np.all(np.isfinite(self.l))
            and np.all(np.isfinite(self.n))
        ):
            raise ValueError("non-finite Galerkin tensor entries")


@dataclass
class RomTrajectory:
    times: np.ndarray        # (T,)
    a: np.ndarray            # (r, T)
    provenance: str          # gp | lstm | true_projection
    diverged_at: Optional[float] = None

    @property
    def r(self) -> int:
        return self.a.shape[0]


def assemble_tensors(basis: PodBasis, re: float, ro: float) -> GalerkinTensors:
    """Project the vorticity equation onto the POD basis (offline stage)."""
    if re <= 0 or ro <= 0:
        raise ValueError("re and ro must be positive")
    grid = basis.grid
    r = basis.r
    w_mean = basis.omega_mean
    p_mean = basis.psi_mean
    _, Y = grid.mesh()
    forcing = Field2D(grid, np.sin(np.pi * Y))

    phi = [basis.phi_field(k) for k in range(r)]
    theta = [basis.theta_field(k) for k in range(r)]

    # quadrature against all phi_k at once
    wq = grid.trapezoid_weights().ravel()
    phi_w = basis.phi.reshape(r, -1) * wq

    def project(field: Field2D) -> np.ndarray:
        return phi_w @ field.values.ravel()

    const_field = (
        -1.0 * arakawa_jacobian(w_mean, p_mean)
        + (1.0 / ro) * (forcing + ddx(p_mean))
        + (1.0 / re) * laplacian(w_mean)
    )
    b = project(const_field)

    l = np.empty((r, r))
    for i in range(r):
        lin_field = (
            -1.0 * arakawa_jacobian(w_mean, theta[i])
            - 1.0 * arakawa_jacobian(phi[i], p_mean)
            + (1.0 / ro) * ddx(theta[i])
            + (1.0 / re) * laplacian(phi[i])
        )
        l[:, i] = project(lin_field)

    n = np.empty((r, r, r))
    for i in range(r):
        for j in range(r):
            n[:, i, j] = project(-1.0 * arakawa_jacobian(phi[i], theta[j]))

    return GalerkinTensors(r=r, re=re, ro=ro, b=b, l=l, n=n)


def gp_rhs(a: np.ndarray, tensors: GalerkinTensors) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (tensors.r,):
        raise ValueError(f"expected {tensors.r} coefficients, got {a.shape}")
    return tensors.b + tensors.l @ a + np.einsum("kij,i,j->k", tensors.n, a, a)


def integrate_gp(
    a0: np.ndarray,
    tensors: GalerkinTensors,
    dt: float,
    t_span: tuple[float, float],
) -> RomTrajectory:
    """Fixed-step TVD-RK3 integration of the Galerkin ODE system.

    Blow-up past the coefficient guard truncates the trajectory and records
    the divergence time; for under-resolved bases that is the expected
    outcome, not an error.
    """
    t0, t1 = t_span
    if dt <= 0 or t1 <= t0:
        raise ValueError("need dt > 0 and t1 > t0")
    a = np.asarray(a0, dtype=np.float64).copy()
    if a.shape != (tensors.r,):
        raise ValueError(f"expected {tensors.r} coefficients, got {a.shape}")

    n_steps = int(round((t1 - t0) / dt))
    times = [t0]
    history = [a.copy()]
    diverged_at = None
    for k in range(n_steps):
        a1 = a + dt * gp_rhs(a, tensors)
        a2 = 0.75 * a + 0.25 * (a1 + dt * gp_rhs(a1, tensors))
        a = (a + 2.0 * (a2 + dt * gp_rhs(a2, tensors))) / 3.0
        t = t0 + (k + 1) * dt
        if not np.all(np.isfinite(a)) or np.max(np.abs(a)) > COEFF_DIVERGENCE_LIMIT:
            diverged_at = t
            break
        times.append(t)
        history.append(a.copy())

    return RomTrajectory(
        times=np.array(times),
        a=np.array(history).T,
        provenance="gp",
        diverged_at=diverged_at,
    )
