"""
Finite-element machinery on a periodic cell mesh.

Scalar fields are continuous P1. Velocities use the MINI element (P1 plus
one cubic bubble per fluid triangle) with continuous P1 pressure. Periodic
slave nodes are aliased to their masters, and zero-mean conditions are
imposed through bordered Lagrange-multiplier rows so that every system
stays symmetric.

Velocity inside the particle is not discretised freely: on every node of
a particle triangle the nodal value is ``a + w * (-y2, y1) - datum(y)``,
with the rigid translation ``a`` and angular rate ``w`` carried as three
extra unknowns. Force and torque balance on the particle are then the
stationarity conditions for those three unknowns.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cellmesh import FLUID, PARTICLE, CellMesh

# integrals over a triangle of area |K|, divided by |K|
BUBBLE_MEAN = 9.0 / 20.0          # b = 27 l1 l2 l3
BUBBLE_GRAD_GRAM = 81.0 / 20.0    # int grad b (x) grad b = 81|K|/20 * sum_i g_i g_i^T


class SingularSystemError(RuntimeError):
    """Raised when a factorisation breaks down or the residual is too large."""


def p1_gradients(mesh: CellMesh) -> tuple[np.ndarray, np.ndarray]:
    """Constant barycentric gradients ``(nt, 3, 2)`` and areas ``(nt,)``."""
    cache = mesh._cache
    if "grads" not in cache:
        p = mesh.nodes[mesh.triangles]
        area = mesh.areas
        # grad l_i = rot90(p_{i+2} - p_{i+1}) / (2|K|)
        e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        g = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2.0 * area[:, None, None])
        cache["grads"] = g
    return cache["grads"], mesh.areas


def per_element(mesh: CellMesh, coefficient) -> np.ndarray:
    """Expand a per-region mapping ``{FLUID: c2, PARTICLE: c1}`` to elements."""
    if isinstance(coefficient, dict):
        c = np.empty(mesh.n_triangles)
        for tag in (FLUID, PARTICLE):
            mask = mesh.regions == tag
            if mask.any():
                c[mask] = coefficient[tag]
        return c
    c = np.asarray(coefficient, float)
    if c.ndim == 0:
        return np.full(mesh.n_triangles, float(c))
    return c


@dataclass(frozen=True)
class DofMap:
    """Numbering of the periodic masters of a node subset.

    ``index[node]`` is the global DOF of ``node`` (slaves share their
    master's DOF) or ``-1`` if the node is not in the subset.
    """

    index: np.ndarray
    n_dofs: int

    @classmethod
    def for_nodes(cls, mesh: CellMesh, nodes=None) -> "DofMap":
        master = mesh.master_map()
        if nodes is None:
            nodes = np.arange(mesh.n_nodes)
        masters = np.unique(master[nodes])
        lookup = np.full(mesh.n_nodes, -1)
        lookup[masters] = np.arange(len(masters))
        index = np.full(mesh.n_nodes, -1)
        index[nodes] = lookup[master[nodes]]
        return cls(index, len(masters))


@dataclass
class SparseSystem:
    """Bordered symmetric system ``[[K, C], [C^T, 0]]``.

    The first ``n_primary`` unknowns are field DOFs, the rest are
    Lagrange multipliers.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_primary: int
    kind: str
    meta: dict = field(default_factory=dict)

    @property
    def n_constraints(self) -> int:
        return self.matrix.shape[0] - self.n_primary

    def symmetry_defect(self) -> float:
        d = self.matrix - self.matrix.T
        return float(abs(d).max()) if d.nnz else 0.0


def bordered(K: sp.spmatrix, constraints: list[np.ndarray]) -> sp.csr_matrix:
    C = sp.csr_matrix(np.column_stack(constraints)) if constraints else None
    if C is None:
        return sp.csr_matrix(K)
    Z = sp.csr_matrix((C.shape[1], C.shape[1]))
    return sp.bmat([[K, C], [C.T, Z]], format="csr")


def _null_direction(A: sp.csc_matrix) -> int:
    """Unknown carrying the largest component of an approximate null vector."""
    shift = 1e-10 * max(abs(A).max(), 1.0)
    lu = spla.splu(sp.csc_matrix(A + shift * sp.identity(A.shape[0])), permc_spec="COLAMD")
    x = lu.solve(np.ones(A.shape[0]))
    return int(np.argmax(np.abs(x)))


def factor(A: sp.spmatrix):
    """Sparse LU with a singularity check on the pivots.

    Raises
    ------
    SingularSystemError
        On an exactly zero or negligible pivot; the message names the
        unknown most involved in the null space.
    """
    A = sp.csc_matrix(A)
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError:
        raise SingularSystemError(
            f"singular system: zero pivot at unknown {_null_direction(A)}") from None
    diag = np.abs(lu.U.diagonal())
    small = diag <= 1e-14 * max(diag.max(), 1.0)
    if small.any():
        pivot = int(lu.perm_c[np.flatnonzero(small)[0]])
        raise SingularSystemError(f"singular system: zero pivot at unknown {pivot}")
    return lu


def solve(system: SparseSystem, tol: float = 1e-9):
    """Direct sparse solve with a residual check.

    Returns ``(x, residual)`` where ``residual`` is ``|Ax-b|/|b|``, or the
    absolute residual when ``b = 0``.
    """
    A = sp.csc_matrix(system.matrix)
    b = np.asarray(system.rhs, float)
    lu = factor(A)
    x = lu.solve(b) if b.ndim == 1 else np.column_stack([lu.solve(c) for c in b.T])
    r = A @ x - b
    nb = np.linalg.norm(b)
    res = float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))
    if not np.isfinite(res) or res > tol:
        raise SingularSystemError(f"singular system: residual {res:.3e} exceeds {tol:.0e}")
    return x, res


# ---------------------------------------------------------------- scalar P1

def assemble_scalar_diffusion(mesh: CellMesh, coefficient) -> SparseSystem:
    """Periodic P1 weighted Laplacian with one zero-mean multiplier row.

    ``coefficient`` is a scalar, a per-element array or a per-region dict.
    The right-hand side is left at zero; see :func:`potential_load`.
    """
    mu = per_element(mesh, coefficient)
    if np.any(mu <= 0):
        raise ValueError("diffusion coefficient must be positive")
    dm = DofMap.for_nodes(mesh)
    _, area = p1_gradients(mesh)
    K = stiffness_matrix(mesh, mu, dm)
    dofs = dm.index[mesh.triangles]
    mass = np.zeros(dm.n_dofs)
    np.add.at(mass, dofs.ravel(), np.repeat(area / 3.0, 3))
    A = bordered(K, [mass])
    return SparseSystem(A, np.zeros(A.shape[0]), dm.n_dofs, "positive-definite-on-constraint-space",
                        {"dofmap": dm, "stiffness": K, "mean_row": mass, "mu": mu})


def stiffness_matrix(mesh: CellMesh, coefficient, dofmap: DofMap | None = None) -> sp.csr_matrix:
    """P1 matrix of ``int c grad u . grad v``.

    Without a ``dofmap`` every node is its own unknown (no periodicity).
    """
    c = per_element(mesh, coefficient)
    g, area = p1_gradients(mesh)
    ke = np.einsum("e,eid,ejd->eij", c * area, g, g)
    if dofmap is None:
        dofs, n = mesh.triangles, mesh.n_nodes
    else:
        dofs, n = dofmap.index[mesh.triangles], dofmap.n_dofs
    return _scatter(ke, dofs, dofs, n, n)


def potential_load(mesh: CellMesh, system: SparseSystem, k: int) -> np.ndarray:
    """Bordered right-hand side ``int mu dv/dy_k`` for the direction ``k``."""
    dm: DofMap = system.meta["dofmap"]
    g, area = p1_gradients(mesh)
    fe = (system.meta["mu"] * area)[:, None] * g[:, :, k]
    b = np.zeros(system.matrix.shape[0])
    np.add.at(b, dm.index[mesh.triangles].ravel(), fe.ravel())
    return b


def _scatter(ke, rows, cols, n, m) -> sp.csr_matrix:
    nl_r, nl_c = rows.shape[1], cols.shape[1]
    R = np.repeat(rows, nl_c, axis=1).ravel()
    C = np.tile(cols, (1, nl_r)).ravel()
    return sp.csr_matrix(sp.coo_matrix((ke.ravel(), (R, C)), shape=(n, m)))


@dataclass
class FeField:
    """Nodal values of a (possibly vector) P1 field plus optional bubbles."""

    mesh: CellMesh
    nodal: np.ndarray
    bubbles: np.ndarray | None = None
    kind: str = "P1"

    def element_gradients(self) -> np.ndarray:
        """Gradient of the P1 part per element: ``(nt, 2)`` or ``(nt, c, 2)``."""
        g, _ = p1_gradients(self.mesh)
        v = self.nodal[self.mesh.triangles]
        if v.ndim == 2:
            return np.einsum("ei,eid->ed", v, g)
        return np.einsum("eic,eid->ecd", v, g)

    def integral(self, mask=None) -> np.ndarray:
        _, area = p1_gradients(self.mesh)
        v = self.nodal[self.mesh.triangles].mean(axis=1)
        w = area if mask is None else area * mask
        total = np.tensordot(w, v, axes=(0, 0))
        if self.bubbles is not None:
            total = total + BUBBLE_MEAN * np.tensordot(w, self.bubbles, axes=(0, 0))
        return total

    def at_centroids(self) -> np.ndarray:
        v = self.nodal[self.mesh.triangles].mean(axis=1)
        if self.bubbles is not None:
            v = v + 1.0 * self.bubbles   # b = 1 at the centroid
        return v


# ------------------------------------------------------------------ Stokes

@dataclass(frozen=True)
class RigidSpec:
    """Prescribed behaviour inside the particle.

    ``datum`` maps node coordinates ``(n, 2)`` to the affine field
    subtracted from the rigid motion (``None`` means zero), and
    ``strain`` is its constant symmetric gradient.
    """

    datum: Callable[[np.ndarray], np.ndarray] | None = None
    strain: np.ndarray | None = None
    label: str = "xi"

    def values(self, y: np.ndarray) -> np.ndarray:
        if self.datum is None:
            return np.zeros_like(y)
        return self.datum(y)


@dataclass
class StokesLayout:
    """Bookkeeping for the reduced Stokes unknowns.

    The full velocity vector holds two components per periodic master node
    followed by two bubble components per fluid triangle. The reduced
    vector ``z`` holds free fluid node components, fluid bubbles and the
    three rigid parameters ``(a1, a2, w)``.
    """

    vel_dofs: DofMap
    p_dofs: DofMap
    fluid_tris: np.ndarray
    T: sp.csr_matrix
    n_full: int
    n_z: int
    rigid_slice: slice
    particle_masters: np.ndarray

    def bubble_offset(self) -> int:
        return 2 * self.vel_dofs.n_dofs


def _stokes_layout(mesh: CellMesh) -> StokesLayout:
    cache = mesh._cache
    if "stokes_layout" in cache:
        return cache["stokes_layout"]
    vel = DofMap.for_nodes(mesh)
    fluid_tris = np.flatnonzero(mesh.regions == FLUID)
    pnodes = mesh.fluid_nodes()
    pdm = DofMap.for_nodes(mesh, pnodes)
    nv = vel.n_dofs
    nb = len(fluid_tris)
    n_full = 2 * nv + 2 * nb

    part_nodes = mesh.particle_nodes()
    part_masters = np.unique(vel.index[part_nodes])
    is_part = np.zeros(nv, bool)
    is_part[part_masters] = True
    free = np.flatnonzero(~is_part)
    n_free = 2 * len(free)
    has_rigid = len(part_masters) > 0
    n_z = n_free + 2 * nb + (3 if has_rigid else 0)

    rows, cols, vals = [], [], []
    # free node components: full index 2*dof + c
    for c in range(2):
        rows.append(2 * free + c)
        cols.append(2 * np.arange(len(free)) + c)
        vals.append(np.ones(len(free)))
    # bubbles map one-to-one
    rows.append(2 * nv + np.arange(2 * nb))
    cols.append(n_free + np.arange(2 * nb))
    vals.append(np.ones(2 * nb))
    if has_rigid:
        r0 = n_free + 2 * nb
        # particle nodes are never periodic, so node index = its own master
        node_of = np.empty(nv, int)
        node_of[vel.index[part_nodes]] = part_nodes
        y = mesh.nodes[node_of[part_masters]]
        ones = np.ones(len(part_masters))
        rows += [2 * part_masters, 2 * part_masters + 1,
                 2 * part_masters, 2 * part_masters + 1]
        cols += [np.full_like(part_masters, r0), np.full_like(part_masters, r0 + 1),
                 np.full_like(part_masters, r0 + 2), np.full_like(part_masters, r0 + 2)]
        vals += [ones, ones, -y[:, 1], y[:, 0]]
    T = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_full, n_z))
    rig = slice(n_free + 2 * nb, n_z)
    layout = StokesLayout(vel, pdm, fluid_tris, T, n_full, n_z, rig, part_masters)
    cache["stokes_layout"] = layout
    return layout


def viscous_matrix(mesh: CellMesh) -> sp.csr_matrix:
    """Full-vector matrix of ``int_{Y_f} 2 e(u):e(v)`` (MINI, fluid only)."""
    cache = mesh._cache
    if "viscous" in cache:
        return cache["viscous"]
    lay = _stokes_layout(mesh)
    g, area = p1_gradients(mesh)
    ft = lay.fluid_tris
    gf, af = g[ft], area[ft]
    # P1 block: 2e(N_a e_k):e(N_b e_l) = d_kl grad N_a.grad N_b + d_l N_a d_k N_b
    lap = np.einsum("eid,ejd->eij", gf, gf)
    ke = np.zeros((len(ft), 6, 6))
    for k in range(2):
        for l in range(2):
            blk = np.einsum("ei,ej->eij", gf[:, :, l], gf[:, :, k])
            if k == l:
                blk = blk + lap
            ke[:, k::2, l::2] = af[:, None, None] * blk
    nodes_dof = lay.vel_dofs.index[mesh.triangles[ft]]
    dofs = np.stack([2 * nodes_dof, 2 * nodes_dof + 1], axis=2).reshape(len(ft), 6)
    K = _scatter(ke, dofs, dofs, lay.n_full, lay.n_full)
    # bubble block, decoupled from P1 since int grad b = 0 on each triangle
    G = np.einsum("eid,eif->edf", gf, gf)
    kb = BUBBLE_GRAD_GRAM * af[:, None, None] * (np.trace(G, axis1=1, axis2=2)[:, None, None]
                                                  * np.eye(2) + G)
    bd = lay.bubble_offset() + 2 * np.arange(len(ft))
    bdofs = np.stack([bd, bd + 1], axis=1)
    K = K + _scatter(kb, bdofs, bdofs, lay.n_full, lay.n_full)
    cache["viscous"] = K
    return K


def divergence_matrix(mesh: CellMesh) -> sp.csr_matrix:
    """``B[q, u] = -int_{Y_f} q div u`` on the full velocity vector."""
    cache = mesh._cache
    if "divergence" in cache:
        return cache["divergence"]
    lay = _stokes_layout(mesh)
    g, area = p1_gradients(mesh)
    ft = lay.fluid_tris
    gf, af = g[ft], area[ft]
    pd = lay.p_dofs.index[mesh.triangles[ft]]
    vd = lay.vel_dofs.index[mesh.triangles[ft]]
    # P1 velocity: -int N_q d_k N_a = -|K|/3 g_{a,k}
    be = -(af / 3.0)[:, None, None] * np.ones((len(ft), 3, 1)) * gf.reshape(len(ft), 1, 6)
    vdofs = np.stack([2 * vd, 2 * vd + 1], axis=2).reshape(len(ft), 6)
    B = _scatter(be, pd, vdofs, lay.p_dofs.n_dofs, lay.n_full)
    # bubble: -int N_q d_k b = +d_k N_q int b
    bb = BUBBLE_MEAN * af[:, None, None] * gf
    bd = lay.bubble_offset() + 2 * np.arange(len(ft))
    B = B + _scatter(bb, pd, np.stack([bd, bd + 1], axis=1), lay.p_dofs.n_dofs, lay.n_full)
    cache["divergence"] = B
    return B


def velocity_mean_rows(mesh: CellMesh) -> np.ndarray:
    """``(2, n_full)`` rows with ``int_Y u_k`` over the whole cell."""
    lay = _stokes_layout(mesh)
    _, area = p1_gradients(mesh)
    w = np.zeros(lay.vel_dofs.n_dofs)
    np.add.at(w, lay.vel_dofs.index[mesh.triangles].ravel(), np.repeat(area / 3.0, 3))
    m = np.zeros((2, lay.n_full))
    m[0, 0:2 * lay.vel_dofs.n_dofs:2] = w
    m[1, 1:2 * lay.vel_dofs.n_dofs:2] = w
    bw = BUBBLE_MEAN * area[lay.fluid_tris]
    off = lay.bubble_offset()
    m[0, off::2] = bw
    m[1, off + 1::2] = bw
    return m


def pressure_mean_row(mesh: CellMesh) -> np.ndarray:
    lay = _stokes_layout(mesh)
    _, area = p1_gradients(mesh)
    ft = lay.fluid_tris
    w = np.zeros(lay.p_dofs.n_dofs)
    np.add.at(w, lay.p_dofs.index[mesh.triangles[ft]].ravel(), np.repeat(area[ft] / 3.0, 3))
    return w


def datum_vector(mesh: CellMesh, rigid: RigidSpec) -> np.ndarray:
    """Full velocity vector carrying ``-datum`` on particle nodes, zero elsewhere."""
    lay = _stokes_layout(mesh)
    gvec = np.zeros(lay.n_full)
    if rigid.datum is None or len(lay.particle_masters) == 0:
        return gvec
    part_nodes = mesh.particle_nodes()
    d = -rigid.values(mesh.nodes[part_nodes])
    dofs = lay.vel_dofs.index[part_nodes]
    gvec[2 * dofs] = d[:, 0]
    gvec[2 * dofs + 1] = d[:, 1]
    return gvec


def forcing_vector(mesh: CellMesh, stress: np.ndarray) -> np.ndarray:
    """Full-vector load ``int_{Y_f} S : grad v`` for per-element symmetric ``S`` (nt, 2, 2)."""
    lay = _stokes_layout(mesh)
    g, area = p1_gradients(mesh)
    ft = lay.fluid_tris
    fe = np.einsum("e,ekd,eid->eik", area[ft], stress[ft], g[ft])   # (ne, 3 nodes, 2 comps)
    vd = lay.vel_dofs.index[mesh.triangles[ft]]
    f = np.zeros(lay.n_full)
    np.add.at(f, 2 * vd.ravel(), fe[:, :, 0].ravel())
    np.add.at(f, 2 * vd.ravel() + 1, fe[:, :, 1].ravel())
    # bubbles: int S : grad b = S : int grad b = 0
    return f


def assemble_stokes(mesh: CellMesh, rigid: RigidSpec | None = None,
                    forcing: np.ndarray | None = None) -> SparseSystem:
    """Saddle-point system for the constrained periodic Stokes cell problem.

    Unknowns, in order: reduced velocity ``z`` (free fluid node components,
    fluid bubbles, rigid ``a1, a2, w``), pressure masters, two velocity-mean
    multipliers, one pressure-mean multiplier.

    Parameters
    ----------
    rigid : RigidSpec, optional
        Affine datum subtracted inside the particle. ``None`` means zero.
    forcing : ndarray, optional
        Per-element symmetric stress ``S`` entering as ``+int_{Y_f} S:e(v)``
        on the left of the variational identity, i.e. as ``-S`` on the right.
    """
    rigid = rigid or RigidSpec()
    lay = _stokes_layout(mesh)
    A = viscous_matrix(mesh)
    B = divergence_matrix(mesh)
    T = lay.T
    gvec = datum_vector(mesh, rigid)
    fu = -(T.T @ (A @ gvec))
    if forcing is not None:
        fu = fu - T.T @ forcing_vector(mesh, forcing)
    fp = -(B @ gvec)
    mv = velocity_mean_rows(mesh)
    K = _stokes_operator(mesh)
    rhs = np.concatenate([fu, fp, -mv @ gvec, [0.0]])
    return SparseSystem(K, rhs, lay.n_z + lay.p_dofs.n_dofs, "saddle-point",
                        {"layout": lay, "datum": gvec, "rigid": rigid})


def _stokes_operator(mesh: CellMesh) -> sp.csr_matrix:
    cache = mesh._cache
    if "stokes_operator" in cache:
        return cache["stokes_operator"]
    lay = _stokes_layout(mesh)
    T = lay.T
    Ar = (T.T @ viscous_matrix(mesh) @ T).tocsr()
    Br = (divergence_matrix(mesh) @ T).tocsr()
    mvr = (sp.csr_matrix(velocity_mean_rows(mesh)) @ T).toarray()
    mp = pressure_mean_row(mesh)
    np_, nz = lay.p_dofs.n_dofs, lay.n_z
    Mu = sp.csr_matrix(np.vstack([mvr, np.zeros((1, nz))]).T)
    Mp = sp.csr_matrix(np.vstack([np.zeros((2, np_)), mp[None, :]]).T)
    K = sp.bmat([[Ar, Br.T, Mu],
                 [Br, None, Mp],
                 [Mu.T, Mp.T, None]], format="csr")
    cache["stokes_operator"] = K
    return K


@dataclass
class DeflatedSaddle:
    """Factorisation of the unbordered Stokes operator with its kernel pinned.

    ``kernel`` holds the three null vectors of the core operator (two
    translations, constant pressure) and ``pins`` one unknown per null
    vector that is fixed to zero before factorising.
    """

    lu: object
    core: sp.csr_matrix
    borders: np.ndarray
    kernel: np.ndarray
    pins: np.ndarray

    def solve(self, b: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Solve ``[[K, M], [M^T, 0]] [x, lam] = [b, c]``."""
        N, M = self.kernel, self.borders
        lam = np.linalg.solve(N.T @ M, N.T @ b)
        r = b - M @ lam
        r[self.pins] = 0.0
        x = self.lu.solve(r)
        x = x + N @ np.linalg.solve(M.T @ N, c - M.T @ x)
        return x, lam


def _kernel_and_pins(lay: StokesLayout, n_core: int) -> tuple[np.ndarray, np.ndarray]:
    N = np.zeros((n_core, 3))
    n_free = lay.rigid_slice.start - 2 * len(lay.fluid_tris)
    for k in range(2):
        N[k:n_free:2, k] = 1.0
    N[lay.n_z:, 2] = 1.0
    if lay.rigid_slice.stop > lay.rigid_slice.start:
        a = lay.rigid_slice.start
        N[a:a + 2, :2] = np.eye(2)
        pins = [a, a + 1]
    else:
        pins = [0, 1]
    return N, np.array(pins + [lay.n_z])


def factor_stokes(mesh: CellMesh, system: SparseSystem) -> DeflatedSaddle:
    """Factorise (once per mesh) the pinned core of a Stokes system."""
    cache = mesh._cache
    if "stokes_factor" in cache:
        return cache["stokes_factor"]
    lay: StokesLayout = system.meta["layout"]
    n = system.n_primary
    A = system.matrix
    core = sp.csr_matrix(A[:n, :n])
    M = A[:n, n:].toarray()
    N, pins = _kernel_and_pins(lay, n)
    keep = np.ones(n)
    keep[pins] = 0.0
    D = sp.diags(keep)
    P = sp.csc_matrix(D @ core @ D + sp.diags(1.0 - keep))
    try:
        lu = factor(P)
    except SingularSystemError as exc:
        raise SingularSystemError(f"element pair unstable or {exc}") from None
    fac = DeflatedSaddle(lu, core, M, N, pins)
    cache["stokes_factor"] = fac
    return fac


@dataclass
class StokesFields:
    velocity: FeField
    pressure: FeField
    translation: np.ndarray
    angular_rate: float
    full_velocity: np.ndarray
    pressure_dofs: np.ndarray
    residual: float


def solve_stokes(mesh: CellMesh, system: SparseSystem, tol: float = 1e-9) -> StokesFields:
    """Solve a system from :func:`assemble_stokes`, reusing the mesh factorisation.

    The residual is measured against the full bordered matrix.
    """
    fac = factor_stokes(mesh, system)
    n = system.n_primary
    b = system.rhs
    xp, lam = fac.solve(b[:n], b[n:])
    x = np.concatenate([xp, lam])
    r = system.matrix @ x - b
    nb = np.linalg.norm(b)
    res = float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))
    if not np.isfinite(res) or res > tol:
        raise SingularSystemError(
            f"element pair unstable or singular system: residual {res:.3e} exceeds {tol:.0e}")
    lay: StokesLayout = system.meta["layout"]
    z = x[:lay.n_z]
    p = x[lay.n_z:lay.n_z + lay.p_dofs.n_dofs]
    u_full = lay.T @ z + system.meta["datum"]
    nv = lay.vel_dofs.n_dofs
    idx = lay.vel_dofs.index
    nodal = np.stack([u_full[2 * idx], u_full[2 * idx + 1]], axis=1)
    bub = np.zeros((mesh.n_triangles, 2))
    bub[lay.fluid_tris] = u_full[2 * nv:].reshape(-1, 2)
    pn = np.zeros(mesh.n_nodes)
    pidx = lay.p_dofs.index
    has = pidx >= 0
    pn[has] = p[pidx[has]]
    if lay.rigid_slice.stop > lay.rigid_slice.start:
        a1, a2, w = z[lay.rigid_slice]
    else:
        a1 = a2 = w = 0.0
    vel = FeField(mesh, nodal, bub, "MINI")
    pres = FeField(mesh, pn, None, "P1-fluid")
    return StokesFields(vel, pres, np.array([a1, a2]), float(w), u_full, p, res)


def rigid_residuals(mesh: CellMesh, fields: StokesFields,
                    forcing: np.ndarray | None = None) -> np.ndarray:
    """Consistent (weak-form) net force and torque on the particle.

    Evaluates ``int_{Y_f} sigma : grad(phi)`` for the three rigid test
    motions ``phi`` extended by their P1 interpolant, which is the discrete
    surface traction integral. Returns ``(F1, F2, M)`` and the magnitude
    scale used to normalise them.
    """
    lay = _stokes_layout(mesh)
    A = viscous_matrix(mesh)
    B = divergence_matrix(mesh)
    r = A @ fields.full_velocity + B.T @ fields.pressure_dofs
    if forcing is not None:
        r = r + forcing_vector(mesh, forcing)
    Tr = lay.T[:, lay.rigid_slice]
    out = Tr.T @ r
    parts = np.abs(Tr.T) @ (np.abs(A) @ np.abs(fields.full_velocity)
                            + np.abs(B.T) @ np.abs(fields.pressure_dofs))
    return out, float(np.max(parts)) if parts.size else 0.0


def full_velocity_vector(field: FeField) -> np.ndarray:
    """Pack a MINI velocity field back into the full Stokes vector."""
    mesh = field.mesh
    lay = _stokes_layout(mesh)
    nv = lay.vel_dofs.n_dofs
    u = np.zeros(lay.n_full)
    idx = lay.vel_dofs.index
    u[2 * idx] = field.nodal[:, 0]
    u[2 * idx + 1] = field.nodal[:, 1]
    u[2 * nv:] = field.bubbles[lay.fluid_tris].ravel()
    return u


def divergence_moments(field: FeField) -> np.ndarray:
    """``int_{Y_f} q div u`` for every pressure basis function ``q``."""
    return -(divergence_matrix(field.mesh) @ full_velocity_vector(field))
