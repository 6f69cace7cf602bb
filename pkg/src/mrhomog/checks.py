"""
Runtime invariant suite for one cell.

Each check returns a :class:`CheckResult` rather than raising, so that the
command-line ``check`` verb can report every outcome.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cellmesh import FLUID, CellMesh
from .effective import solve_cell
from .femcore import divergence_moments, p1_gradients
from .magnetostatics import MaterialParams
from .stokescell import PAIRS


@dataclass
class CheckResult:
    cell: str
    name: str
    ok: bool
    value: float
    tol: float
    detail: str


def _rel(a, b):
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-300)
    return float(np.abs(a - b).max() / scale)


def run_checks(mesh: CellMesh, mat: MaterialParams) -> list[CheckResult]:
    """Solve every cell problem on ``mesh`` and test the invariants."""
    label = f"{mesh.width:g}x{mesh.height:g}"
    out: list[CheckResult] = []

    def check(name, value, tol):
        value = float(value)
        out.append(CheckResult(label, name, bool(value <= tol), value, tol,
                               f"{value:.3e} (tol {tol:.0e})"))

    try:
        mesh.validate()
        check("mesh validates", 0.0, 0.0)
    except ValueError as exc:
        out.append(CheckResult(label, "mesh validates", False, np.inf, 0.0, str(exc)))
    if mesh.has_particle and mesh.spec is not None:
        target = mesh.spec.volume_fraction
        check("particle area vs pi r^2 (relative)", abs(mesh.particle_area() / target - 1), 5e-3)

    res = solve_cell(mesh, mat)
    c = res.coefficients
    _, area = p1_gradients(mesh)
    fluid = (mesh.regions == FLUID).astype(float)

    check("potential residual", max(res.potentials.residuals), 1e-9)
    check("potential zero mean", max(abs(float(p.integral())) for p in res.potentials.phi), 1e-10)
    A2 = res.A4.A2
    check("<A> = I", np.abs(np.einsum("e,eij->ij", area, A2) - np.eye(2)).max(), 1e-8)
    A4 = res.A4.A4
    check("A4 symmetric in ij", np.abs(A4 - np.swapaxes(A4, 3, 4)).max(), 1e-12)
    check("A4 symmetric in ml", np.abs(A4 - np.swapaxes(A4, 1, 2)).max(), 1e-12)
    check("A4 traceless in ij (relative)",
          np.abs(np.trace(A4, axis1=3, axis2=4)).max() / max(np.abs(A4).max(), 1.0), 1e-12)

    mu_H = c.mu_H
    check("mu_H symmetric (relative)", _rel(mu_H, mu_H.T), 1e-9)
    ev = np.linalg.eigvalsh(0.5 * (mu_H + mu_H.T))
    lo, hi = min(mat.mu_particle, mat.mu_fluid), max(mat.mu_particle, mat.mu_fluid)
    check("mu_H eigenvalues within [min mu, max mu]",
          max(lo - ev.min(), ev.max() - hi, 0.0) / hi, 1e-12)
    check("mu_H flux form = energy form (relative)", _rel(mu_H, res.mu.mu_H_energy), 1e-6)

    for fam, sols in (("chi", res.chi), ("xi", res.xi)):
        for p in PAIRS:
            s = sols[p]
            tag = f"{fam}{p[0] + 1}{p[1] + 1}"
            check(f"{tag} residual", s.residual, 1e-9)
            check(f"{tag} velocity zero mean", np.abs(s.velocity.integral()).max(), 1e-10)
            check(f"{tag} pressure zero mean", abs(float(s.pressure.integral(fluid))), 1e-9)
            check(f"{tag} discrete incompressibility",
                  np.abs(divergence_moments(s.velocity)).max(), 1e-9)
            if mesh.has_particle:
                ft = np.abs(s.force_torque).max() / max(s.force_scale, 1e-300)
                check(f"{tag} force/torque balance (relative)", ft, 1e-6)
                check(f"{tag} particle translation", np.abs(s.translation).max(), 1e-9)
    d = res.chi[(0, 0)].velocity.nodal + res.chi[(1, 1)].velocity.nodal
    check("chi11 = -chi22", np.abs(d).max(), 1e-9)

    nu, beta = c.nu_H, c.beta_H
    scale = np.abs(nu).max()
    check("nu_H minor symmetry", np.abs(nu - nu.transpose(1, 0, 2, 3)).max() / scale, 1e-8)
    check("nu_H major symmetry", np.abs(nu - nu.transpose(2, 3, 0, 1)).max() / scale, 1e-8)
    bscale = max(np.abs(beta).max(), 1e-300)
    check("beta_H symmetric in ij", np.abs(beta - beta.transpose(1, 0, 2, 3)).max() / bscale, 1e-8)
    check("beta_H symmetric in ml", np.abs(beta - beta.transpose(0, 1, 3, 2)).max() / bscale, 1e-8)
    check("nu_b = 0", abs(c.nu_b), 1e-8)
    check("beta_b = 0", abs(c.beta_b), 1e-8)
    check("Voigt nu_H positive semidefinite", max(-np.linalg.eigvalsh(c.voigt_nu()).min(), 0.0), 1e-9)
    check("viscous coupling term of beta_H vanishes (relative)",
          np.abs(res.beta_parts.viscous).max() / bscale, 1e-8)
    return out
