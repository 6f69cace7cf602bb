"""
Scalar-potential cell problems and the magnetic localisation tensors.

For each direction ``k`` the periodic, zero-mean potential ``phi^k`` solves

    int_Y mu grad(phi^k) . grad(v) = int_Y mu dv/dy_k      for all v,

and the microscopic field is ``H = A Htilde`` with
``A[i, l] = delta_il - d phi^l / d y_i``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cellmesh import FLUID, PARTICLE, CellMesh
from .femcore import (FeField, assemble_scalar_diffusion, p1_gradients, potential_load,
                      solve)


@dataclass(frozen=True)
class MaterialParams:
    """Relative permeabilities and the nondimensional coupling numbers."""

    mu_particle: float = 2.0e5
    mu_fluid: float = 1.0
    alfven: float = 1.0
    magnetic_reynolds: float = 1.0e-2

    def __post_init__(self):
        if self.mu_particle <= 0 or self.mu_fluid <= 0:
            raise ValueError("permeabilities must be positive")
        if self.alfven < 0 or self.magnetic_reynolds < 0:
            raise ValueError("alfven and magnetic_reynolds must be nonnegative")

    def mu_elements(self, mesh: CellMesh) -> np.ndarray:
        return np.where(mesh.regions == PARTICLE, self.mu_particle, self.mu_fluid)


@dataclass
class PotentialSolution:
    mesh: CellMesh
    material: MaterialParams
    phi: list[FeField]
    residuals: tuple[float, float]

    def gradients(self) -> np.ndarray:
        """``grad[e, i, l] = d phi^l / d y_i`` on each element."""
        return np.stack([f.element_gradients() for f in self.phi], axis=2)


@dataclass
class ATensors:
    """Per-element localisation tensors.

    ``A2[e, i, l]`` is ``A_il`` and ``A4[e, m, l, i, j]`` is ``A^{ml}_{ij}``.
    """

    A2: np.ndarray
    A4: np.ndarray


@dataclass
class MuTensors:
    mu_H: np.ndarray
    mu_HS: np.ndarray
    mu_H_energy: np.ndarray


def solve_potentials(mesh: CellMesh, mat: MaterialParams) -> PotentialSolution:
    """Solve the two potential cell problems on ``mesh``."""
    system = assemble_scalar_diffusion(mesh, {FLUID: mat.mu_fluid, PARTICLE: mat.mu_particle})
    dm = system.meta["dofmap"]
    rhs = np.column_stack([potential_load(mesh, system, k) for k in range(2)])
    system.rhs = rhs
    x, _ = solve(system)
    phis, res = [], []
    A = system.matrix
    for k in range(2):
        b = rhs[:, k]
        r = A @ x[:, k] - b
        nb = np.linalg.norm(b)
        res.append(float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r)))
        phis.append(FeField(mesh, x[dm.index, k].copy(), None, "P1"))
    return PotentialSolution(mesh, mat, phis, tuple(res))


def compute_A2(pot: PotentialSolution) -> np.ndarray:
    return np.eye(2)[None] - pot.gradients()


def maxwell_stress_tensor(A2: np.ndarray) -> np.ndarray:
    """``A^{ml}_{ij} = (A_il A_jm + A_jl A_im - A_km A_kl delta_ij) / 2``.

    The quadratic term contracts the first index of ``A``, so that
    ``A^{ml}_{ij} Ht_m Ht_l = H_i H_j - |H|^2 delta_ij / 2`` with ``H = A Ht``.
    """
    t = np.einsum("eil,ejm->emlij", A2, A2)
    t = 0.5 * (t + np.swapaxes(t, 3, 4))
    AtA = np.einsum("ekm,ekl->eml", A2, A2)
    return t - 0.5 * AtA[:, :, :, None, None] * np.eye(2)[None, None, None]


def compute_A4(pot: PotentialSolution) -> ATensors:
    A2 = compute_A2(pot)
    return ATensors(A2, maxwell_stress_tensor(A2))


def compute_mu_tensors(mesh: CellMesh, mat: MaterialParams,
                       pot: PotentialSolution) -> MuTensors:
    """Cell-averaged and particle-only permeability tensors.

    ``mu_H[i, k] = int_Y mu A_ik`` and ``mu_HS[i, k] = int_T mu A_ik``.
    ``mu_H_energy`` is ``int_Y mu A^T A``, equal to ``mu_H`` by Galerkin
    orthogonality.
    """
    _, area = p1_gradients(mesh)
    mu = mat.mu_elements(mesh)
    A2 = compute_A2(pot)
    w = mu * area
    mu_H = np.einsum("e,eik->ik", w, A2)
    part = mesh.regions == PARTICLE
    mu_HS = np.einsum("e,eik->ik", w * part, A2)
    energy = np.einsum("e,eji,ejk->ik", w, A2, A2)
    return MuTensors(mu_H, mu_HS, energy)
