"""
Stokes cell problems for a rigid particle in a periodic fluid cell.

``chi^{ml}`` is driven by a unit traceless macroscopic strain rate
``C^{ml}``: inside the particle the velocity is a rigid motion minus the
affine field ``B^{ml}`` with ``e(B^{ml}) = C^{ml}``.

``xi^{ml}`` is driven by the magnetic stress ``mu A^{ml}`` acting on the
fluid; inside the particle the velocity is a rigid motion.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cellmesh import CellMesh
from .femcore import (FeField, RigidSpec, assemble_stokes, rigid_residuals, solve_stokes)

PAIRS = ((0, 0), (0, 1), (1, 1))
DIM = 2


def strain_tensor(m: int, l: int) -> np.ndarray:
    """``C_{ij ml} = (d_im d_jl + d_il d_jm)/2 - d_ij d_ml / n`` as a 2x2 matrix in ``ij``."""
    d = np.eye(DIM)
    return 0.5 * (np.outer(d[m], d[l]) + np.outer(d[l], d[m])) - d * d[m, l] / DIM


def affine_field(m: int, l: int, y: np.ndarray) -> np.ndarray:
    """``B^{ml}_k(y) = (y_m d_lk + y_l d_mk)/2 - y_k d_ml / n``; equals ``C^{ml} y``."""
    return y @ strain_tensor(m, l).T


def rigid_spec_chi(m: int, l: int) -> RigidSpec:
    C = strain_tensor(m, l)
    return RigidSpec(lambda y: affine_field(m, l, y), C, f"chi{m + 1}{l + 1}")


@dataclass
class StokesCellSolution:
    label: str
    velocity: FeField
    pressure: FeField
    translation: np.ndarray
    angular_rate: float
    residual: float
    force_torque: np.ndarray
    force_scale: float
    forcing: np.ndarray | None = None


def _run(mesh: CellMesh, rigid: RigidSpec, forcing, label) -> StokesCellSolution:
    system = assemble_stokes(mesh, rigid, forcing)
    f = solve_stokes(mesh, system)
    if mesh.has_particle:
        ft, scale = rigid_residuals(mesh, f, forcing)
    else:
        ft, scale = np.zeros(3), 0.0
    return StokesCellSolution(label, f.velocity, f.pressure, f.translation,
                              f.angular_rate, f.residual, ft, scale, forcing)


def solve_chi(mesh: CellMesh, m: int, l: int) -> StokesCellSolution:
    """Strain-driven corrector for the (0-based) index pair ``(m, l)``."""
    if (m, l) not in PAIRS and (l, m) not in PAIRS:
        raise ValueError(f"invalid index pair {(m, l)}")
    m, l = min(m, l), max(m, l)
    return _run(mesh, rigid_spec_chi(m, l), None, f"chi{m + 1}{l + 1}")


def magnetic_forcing(mu: np.ndarray, A4, m: int, l: int) -> np.ndarray:
    """Per-element stress ``mu A^{ml}`` with unit Alfven number."""
    return mu[:, None, None] * A4.A4[:, m, l]


def solve_xi(mesh: CellMesh, m: int, l: int, A4, mat) -> StokesCellSolution:
    """Magnetically forced corrector ``xi^{ml}`` (0-based indices)."""
    if (m, l) not in PAIRS and (l, m) not in PAIRS:
        raise ValueError(f"invalid index pair {(m, l)}")
    m, l = min(m, l), max(m, l)
    S = magnetic_forcing(mat.mu_elements(mesh), A4, m, l)
    return _run(mesh, RigidSpec(), S, f"xi{m + 1}{l + 1}")


def solve_xi_forcing(mesh: CellMesh, stress: np.ndarray, label="xi") -> StokesCellSolution:
    """Rigid-particle Stokes problem for an arbitrary per-element stress."""
    return _run(mesh, RigidSpec(), stress, label)
