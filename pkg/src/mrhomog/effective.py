"""
Effective viscosity and magnetic-stress tensors from solved cell problems.

    nu_H[i,j,m,l]   = int_{Y_f} 2 e(B^{ml} + chi^{ml}) : e(B^{ij} + chi^{ij})
    beta_H[i,j,m,l] = int_{Y_f} 2 e(xi^{ml}) : e(B^{ij} + chi^{ij})
                      + alpha int_{Y_f} mu A^{ml} : e(B^{ij} + chi^{ij})
                      + alpha int_Y mu A^{ml}_{ij}

Scalars are the unnormalised traces against the shear and bulk projections
(``nu_s = tr(P_s nu_H)``, so a pure fluid gives ``nu_s = 4`` in 2-D).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cellmesh import FLUID, CellMesh, CellSpec, build_cell, mesh_quality
from .femcore import BUBBLE_GRAD_GRAM, p1_gradients
from .magnetostatics import (MaterialParams, compute_A4, compute_mu_tensors,
                             solve_potentials)
from .stokescell import PAIRS, StokesCellSolution, solve_chi, solve_xi, strain_tensor

log = logging.getLogger(__name__)

DIM = 2


def projections(n: int = DIM) -> tuple[np.ndarray, np.ndarray]:
    """Bulk and shear projections ``(P_b, P_s)`` as ``n^4`` arrays."""
    d = np.eye(n)
    Pb = np.einsum("ij,kl->ijkl", d, d) / n
    Ps = 0.5 * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)) - Pb
    return Pb, Ps


def _pair_index(m, l):
    return PAIRS.index((min(m, l), max(m, l)))


def _fluid_strains(mesh: CellMesh, sol: StokesCellSolution, datum: np.ndarray | None):
    """Per-fluid-element P1 strain (plus constant datum strain) and bubble values."""
    ft = np.flatnonzero(mesh.regions == FLUID)
    grad = sol.velocity.element_gradients()[ft]        # (ne, c, d)
    e = 0.5 * (grad + np.swapaxes(grad, 1, 2))
    if datum is not None:
        e = e + datum
    return e, sol.velocity.bubbles[ft]


def _bubble_form(mesh: CellMesh, b1: np.ndarray, b2: np.ndarray) -> float:
    """``int 2 e(b1 bub) : e(b2 bub)`` summed over fluid elements."""
    ft = np.flatnonzero(mesh.regions == FLUID)
    g, area = p1_gradients(mesh)
    G = np.einsum("eid,eif->edf", g[ft], g[ft])
    K = BUBBLE_GRAD_GRAM * area[ft, None, None] * (
        np.trace(G, axis1=1, axis2=2)[:, None, None] * np.eye(2) + G)
    return float(np.einsum("ek,ekl,el->", b1, K, b2))


def assemble_nu(mesh: CellMesh, chi: dict) -> np.ndarray:
    """Fourth-order effective viscosity from the three ``chi`` solutions.

    ``chi`` maps 0-based pairs ``(m, l)`` from :data:`PAIRS` to solutions.
    """
    _check_provenance(mesh, chi.values())
    ft = np.flatnonzero(mesh.regions == FLUID)
    _, area = p1_gradients(mesh)
    af = area[ft]
    E, Bb = {}, {}
    for p in PAIRS:
        E[p], Bb[p] = _fluid_strains(mesh, chi[p], strain_tensor(*p))
    gram = np.zeros((3, 3))
    for a, p in enumerate(PAIRS):
        for b, q in enumerate(PAIRS):
            gram[a, b] = (2.0 * np.einsum("e,ecd,ecd->", af, E[p], E[q])
                          + _bubble_form(mesh, Bb[p], Bb[q]))
    return _expand(gram)


def _expand(table: np.ndarray) -> np.ndarray:
    """Fill ``T[i,j,m,l] = table[pair(i,j), pair(m,l)]``."""
    T = np.zeros((DIM,) * 4)
    for i in range(DIM):
        for j in range(DIM):
            for m in range(DIM):
                for l in range(DIM):
                    T[i, j, m, l] = table[_pair_index(i, j), _pair_index(m, l)]
    return T


@dataclass
class BetaParts:
    """The three contributions to ``beta_H``; total is ``viscous + alpha * magnetic``."""

    viscous: np.ndarray
    fluid_stress: np.ndarray
    maxwell_mean: np.ndarray

    def total(self, alpha: float) -> np.ndarray:
        return self.viscous + alpha * (self.fluid_stress + self.maxwell_mean)


def beta_parts(mesh: CellMesh, chi: dict, xi: dict, A4, mat: MaterialParams) -> BetaParts:
    _check_provenance(mesh, list(chi.values()) + list(xi.values()))
    ft = np.flatnonzero(mesh.regions == FLUID)
    _, area = p1_gradients(mesh)
    af = area[ft]
    mu = mat.mu_elements(mesh)
    E, Bc, Ex, Bx = {}, {}, {}, {}
    for p in PAIRS:
        E[p], Bc[p] = _fluid_strains(mesh, chi[p], strain_tensor(*p))
        Ex[p], Bx[p] = _fluid_strains(mesh, xi[p], None)
    visc = np.zeros((3, 3))
    fl = np.zeros((3, 3))
    for a, ij in enumerate(PAIRS):
        for b, ml in enumerate(PAIRS):
            visc[a, b] = (2.0 * np.einsum("e,ecd,ecd->", af, Ex[ml], E[ij])
                          + _bubble_form(mesh, Bx[ml], Bc[ij]))
            fl[a, b] = np.einsum("e,ecd,ecd->", af * mu[ft], A4.A4[ft, ml[0], ml[1]], E[ij])
    # third term is pointwise in (i, j, m, l)
    mean = np.einsum("e,emlij->ijml", area * mu, A4.A4)
    return BetaParts(_expand(visc), _expand(fl), mean)


def assemble_beta(mesh: CellMesh, chi: dict, xi: dict, A4, mat: MaterialParams) -> np.ndarray:
    return beta_parts(mesh, chi, xi, A4, mat).total(mat.alfven)


def reduce_scalars(nu_H: np.ndarray, beta_H: np.ndarray, n: int = DIM):
    """``(nu_s, nu_b, beta_s, beta_b)`` as traces against ``P_s`` and ``P_b``."""
    def pair(T):
        full = np.einsum("pqpq->", T)
        bulk = np.einsum("ppqq->", T)
        return full - bulk / n, bulk / n
    nu_s, nu_b = pair(nu_H)
    beta_s, beta_b = pair(beta_H)
    return float(nu_s), float(nu_b), float(beta_s), float(beta_b)


def _check_provenance(mesh, sols):
    for s in sols:
        if s.velocity.mesh is not mesh:
            raise ValueError(f"solution {s.label} was computed on a different mesh")


@dataclass
class EffectiveCoefficients:
    nu_H: np.ndarray
    beta_H: np.ndarray
    mu_H: np.ndarray
    mu_HS: np.ndarray
    nu_s: float
    nu_b: float
    beta_s: float
    beta_b: float
    provenance: dict = field(default_factory=dict)

    @property
    def nu_s_normalized(self) -> float:
        return self.nu_s / 2.0

    @property
    def beta_s_normalized(self) -> float:
        return self.beta_s / 2.0

    def voigt_nu(self) -> np.ndarray:
        """3x3 representation on the basis ``C^{11}, C^{12}, C^{22}`` (Gram matrix)."""
        return np.array([[self.nu_H[p + q] for q in PAIRS] for p in PAIRS])


@dataclass
class CellResult:
    """Everything computed on one cell: fields, tensors and coefficients."""

    mesh: CellMesh
    material: MaterialParams
    potentials: object
    A4: object
    mu: object
    chi: dict
    xi: dict
    beta_parts: BetaParts
    coefficients: EffectiveCoefficients


def solve_cell(mesh: CellMesh, mat: MaterialParams) -> CellResult:
    """Run the potential, chi and xi cell problems and assemble all tensors."""
    pot = solve_potentials(mesh, mat)
    A4 = compute_A4(pot)
    mu = compute_mu_tensors(mesh, mat, pot)
    chi = {p: solve_chi(mesh, *p) for p in PAIRS}
    xi = {p: solve_xi(mesh, *p, A4, mat) for p in PAIRS}
    nu_H = assemble_nu(mesh, chi)
    parts = beta_parts(mesh, chi, xi, A4, mat)
    beta_H = parts.total(mat.alfven)
    nu_s, nu_b, beta_s, beta_b = reduce_scalars(nu_H, beta_H)
    spec = mesh.spec
    quality = mesh_quality(mesh)
    prov = {
        "aspect": spec.aspect_label if spec else f"{mesh.width:g}x{mesh.height:g}",
        "volume_fraction": spec.volume_fraction if spec else None,
        "circle_segments": spec.circle_segments if spec else None,
        "grid_density": spec.density if spec else None,
        "n_nodes": mesh.n_nodes,
        "n_triangles": mesh.n_triangles,
        "min_angle_deg": quality.min_angle_deg,
        "particle_area": mesh.particle_area(),
        "mu_particle": mat.mu_particle,
        "mu_fluid": mat.mu_fluid,
        "alfven": mat.alfven,
    }
    coeffs = EffectiveCoefficients(nu_H, beta_H, mu.mu_H, mu.mu_HS,
                                   nu_s, nu_b, beta_s, beta_b, prov)
    return CellResult(mesh, mat, pot, A4, mu, chi, xi, parts, coeffs)


def effective_coefficients(spec: CellSpec, mat: MaterialParams, refine: int = 0):
    return solve_cell(build_cell(spec.refined(refine) if refine else spec), mat).coefficients


def sweep_volume_fraction(fractions, aspects=((1.0, 1.0), (2.0, 0.5)),
                          mat: MaterialParams | None = None,
                          template: CellSpec | None = None,
                          refine: int = 0, jobs: int = 1) -> list[EffectiveCoefficients]:
    """Coefficient rows for every admissible ``(aspect, f)`` combination.

    Mesh settings other than the aspect and fraction come from ``template``.
    Inadmissible fractions are skipped with a warning. Rows are ordered by
    aspect then fraction regardless of ``jobs``.
    """
    from dataclasses import replace

    from .cellmesh import MeshError
    mat = mat or MaterialParams()
    template = template or CellSpec()
    specs = []
    for w, h in aspects:
        for f in fractions:
            try:
                spec = replace(template, width=w, height=h, volume_fraction=f)
            except MeshError as exc:
                log.warning("skipping f=%g on %gx%g cell: %s", f, w, h, exc)
                continue
            specs.append(spec.refined(refine) if refine else spec)
    return coefficients_for(specs, mat, jobs)


def coefficients_for(specs, mat: MaterialParams, jobs: int = 1) -> list[EffectiveCoefficients]:
    """Effective coefficients for each spec, in order, optionally in parallel."""
    specs = list(specs)
    if jobs > 1 and len(specs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(min(jobs, len(specs))) as ex:
            return list(ex.map(_sweep_row, specs, [mat] * len(specs)))
    return [_sweep_row(s, mat) for s in specs]


def _sweep_row(spec: CellSpec, mat: MaterialParams) -> EffectiveCoefficients:
    return solve_cell(build_cell(spec), mat).coefficients


def clausius_mossotti(f: float, mu1: float, mu2: float) -> float:
    """Dilute two-dimensional estimate ``mu2 (1 + 2 f b / (1 - f b))``."""
    b = (mu1 - mu2) / (mu1 + mu2)
    return mu2 * (1.0 + 2.0 * f * b / (1.0 - f * b))

