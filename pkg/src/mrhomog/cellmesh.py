"""
Periodic unit-cell meshes with a centred circular particle.

The cell is the rectangle ``[-w/2, w/2] x [-h/2, h/2]`` with ``w * h = 1``.
One quadrant is triangulated with a constrained Delaunay mesher and then
mirrored across both axes, so opposite cell edges carry identical node
traces and the node set is exactly symmetric about both axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import triangle

FLUID = 0
PARTICLE = 1


class MeshError(ValueError):
    """Raised for inadmissible cell geometry or a degenerate mesh."""


@dataclass(frozen=True)
class CellSpec:
    """Geometry of a periodic cell.

    Parameters
    ----------
    width, height : float
        Cell side lengths; their product must be 1.
    volume_fraction : float
        Particle area fraction ``f``. ``f = 0`` gives a particle-free cell.
    circle_segments : int
        Number of straight segments approximating the particle boundary.
        Must be a multiple of 4 (the mesh is built on one quadrant).
    grid_density : float, optional
        Target background edge length. Defaults to ``min(width, height) / 20``.
    gap_cells : float
        Minimum number of element edges across the particle-to-image gap.
        Where the gap is narrow the boundary spacing drops below
        ``circle_segments`` resolution so that lubrication layers are resolved.
    """

    width: float = 1.0
    height: float = 1.0
    volume_fraction: float = 0.19
    circle_segments: int = 100
    grid_density: float | None = None
    gap_cells: float = 4.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise MeshError("cell sides must be positive")
        if abs(self.width * self.height - 1.0) > 1e-12:
            raise MeshError(f"cell area must be 1, got {self.width * self.height!r}")
        if self.volume_fraction < 0:
            raise MeshError("volume fraction must be nonnegative")
        if 2.0 * self.radius >= min(self.width, self.height):
            raise MeshError("particle touches cell boundary")
        if self.volume_fraction > 0:
            if self.circle_segments < 8:
                raise MeshError("circle_segments must be at least 8")
            if self.circle_segments % 4:
                raise MeshError("circle_segments must be a multiple of 4")
        if self.grid_density is not None and self.grid_density <= 0:
            raise MeshError("grid_density must be positive")
        if self.gap_cells <= 0:
            raise MeshError("gap_cells must be positive")

    @property
    def radius(self) -> float:
        return math.sqrt(self.volume_fraction / math.pi)

    @property
    def density(self) -> float:
        if self.grid_density is None:
            return min(self.width, self.height) / 20.0
        return self.grid_density

    @property
    def aspect_label(self) -> str:
        return f"{_fmt(self.width)}x{_fmt(self.height)}"

    def refined(self, level: int) -> "CellSpec":
        """Return a copy with every mesh length halved ``level`` times."""
        k = 2 ** level
        return CellSpec(self.width, self.height, self.volume_fraction,
                        self.circle_segments * k, self.density / k, self.gap_cells * k)


def _fmt(x: float) -> str:
    return f"{x:g}"


@dataclass(frozen=True, eq=False)
class CellMesh:
    """Conforming triangulation of a periodic cell.

    ``periodic_pairs`` holds ``(master, slave)`` node pairs: every node on
    the right edge is paired with its twin on the left edge, every node on
    the top edge with its twin on the bottom edge. ``corner_group`` lists
    the four corner nodes, master (bottom-left) first.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    width: float
    height: float
    boundary_edges: np.ndarray
    periodic_pairs: np.ndarray
    corner_group: np.ndarray
    spec: CellSpec | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("nodes", "triangles", "regions", "boundary_edges",
                     "periodic_pairs", "corner_group"):
            getattr(self, name).setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def has_particle(self) -> bool:
        return bool(np.any(self.regions == PARTICLE))

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            self._cache["areas"] = self.signed_areas()
        return self._cache["areas"]

    def particle_area(self) -> float:
        return float(self.areas[self.regions == PARTICLE].sum())

    def master_map(self) -> np.ndarray:
        """Map each node to its periodic master (identity for free nodes)."""
        if "master" not in self._cache:
            m = np.arange(self.n_nodes)
            for master, slave in self.periodic_pairs:
                m[slave] = master
            # corners are chained through two pairings
            for _ in range(2):
                m = m[m]
            self._cache["master"] = m
        return self._cache["master"]

    def particle_nodes(self) -> np.ndarray:
        """Sorted indices of nodes touching at least one particle triangle."""
        return np.unique(self.triangles[self.regions == PARTICLE])

    def fluid_nodes(self) -> np.ndarray:
        return np.unique(self.triangles[self.regions == FLUID])

    def validate(self) -> None:
        """Check the mesh invariants, raising :class:`MeshError` on failure."""
        if len(self.triangles) == 0:
            raise MeshError("mesh has no triangles")
        a = self.signed_areas()
        if np.any(a <= 0):
            bad = int(np.argmin(a))
            raise MeshError(f"triangle {bad} has nonpositive area {a[bad]:.3e}")
        if not set(np.unique(self.regions)) <= {FLUID, PARTICLE}:
            raise MeshError("unknown region tag")
        if abs(a.sum() - self.width * self.height) > 1e-10:
            raise MeshError("triangle areas do not sum to the cell area")
        x = self.nodes
        for master, slave in self.periodic_pairs:
            d = x[slave] - x[master]
            ok = ((abs(abs(d[0]) - self.width) <= 1e-12 and abs(d[1]) <= 1e-12)
                  or (abs(abs(d[1]) - self.height) <= 1e-12 and abs(d[0]) <= 1e-12))
            if not ok:
                raise MeshError(f"periodic pair ({master}, {slave}) has offset {d}")
        if self.has_particle and not _is_single_loop(self.boundary_edges):
            raise MeshError("particle boundary is not a single closed loop")


def _is_single_loop(edges: np.ndarray) -> bool:
    if len(edges) < 3:
        return False
    nxt = {}
    for a, b in edges:
        if a in nxt:
            return False
        nxt[int(a)] = int(b)
    start = int(edges[0, 0])
    cur, n = start, 0
    while True:
        cur = nxt.get(cur)
        n += 1
        if cur is None:
            return False
        if cur == start:
            return n == len(edges)


def _edge_points(p0, p1, size_fn):
    """Interior points on segment p0-p1, equidistributed in the metric ``1/size_fn``."""
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    length = float(np.linalg.norm(p1 - p0))
    t = np.linspace(0.0, 1.0, 2001)
    dens = np.array([length / size_fn(p0 + (p1 - p0) * s) for s in t])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(t))])
    n = max(1, int(round(cum[-1])))
    ts = np.interp(np.arange(1, n) * cum[-1] / n, cum, t)
    return [p0 + (p1 - p0) * s for s in ts]


def _arc_angles(size_fn, r, n_min):
    """Interior angles in (0, pi/2), equidistributed in the metric ``r / size_fn``.

    At least ``n_min`` segments are used; with a constant size equal to the
    uniform arc length the angles are exactly uniform.
    """
    t = np.linspace(0.0, 0.5 * math.pi, 20001)
    dens = np.array([r / size_fn(th) for th in t])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(t))])
    n = max(n_min, int(math.ceil(cum[-1] - 1e-9)))
    if n == n_min and np.ptp(dens) <= 1e-12 * dens.max():
        return [0.5 * math.pi * k / n for k in range(1, n)]
    return list(np.interp(np.arange(1, n) * cum[-1] / n, cum, t))


def _quadrant_pslg(spec: CellSpec):
    W, H = spec.width / 2.0, spec.height / 2.0
    r = spec.radius
    g = spec.density
    pts: list[np.ndarray] = []
    segs: list[tuple[int, int]] = []

    def add(p):
        pts.append(np.asarray(p, float))
        return len(pts) - 1

    def chain(p_start_idx, p_end, size_fn):
        idx = p_start_idx
        for q in _edge_points(pts[p_start_idx], p_end, size_fn):
            j = add(q)
            segs.append((idx, j))
            idx = j
        j = add(p_end)
        segs.append((idx, j))
        return j

    if r == 0:
        size = lambda p: g
        i0 = add((0.0, 0.0))
        i1 = chain(i0, (W, 0.0), size)
        i2 = chain(i1, (W, H), size)
        i3 = chain(i2, (0.0, H), size)
        chain(i3, (0.0, 0.0), size)
        segs[-1] = (segs[-1][0], i0)
        pts.pop()
        return np.array(pts), np.array(segs), [], 0

    arc_len = 2 * math.pi * r / spec.circle_segments
    images = [(2 * W * i, 2 * H * j) for i in (-1, 0, 1) for j in (-1, 0, 1) if i or j]

    def arc_size(th):
        # spacing on the particle boundary: the uniform arc length, reduced
        # to a fraction of the distance to the nearest periodic image
        q = (r * math.cos(th), r * math.sin(th))
        gap = min(math.hypot(q[0] - cx, q[1] - cy) for cx, cy in images) - r
        return min(arc_len, gap / spec.gap_cells)

    def size(p):
        rho = math.hypot(p[0], p[1])
        th = math.atan2(p[1], p[0]) if rho > 0 else 0.0
        return min(g, arc_size(th) + 0.4 * abs(rho - r))

    origin = add((0.0, 0.0))
    a0 = chain(origin, (r, 0.0), size)
    i = chain(a0, (W, 0.0), size)
    i = chain(i, (W, H), size)
    i = chain(i, (0.0, H), size)
    top = chain(i, (0.0, r), size)
    chain(top, (0.0, 0.0), size)
    pts.pop()
    segs[-1] = (segs[-1][0], origin)
    # quarter arc from (0, r) back to (r, 0)
    angles = _arc_angles(arc_size, r, spec.circle_segments // 4)
    n_arc = len(angles) + 1
    prev = top
    for th in angles[::-1]:
        j = add((r * math.cos(th), r * math.sin(th)))
        segs.append((prev, j))
        prev = j
    segs.append((prev, a0))
    seeds = [((0.3 * r, 0.3 * r), PARTICLE),
             ((W - 1e-3 * g, H - 1e-3 * g), FLUID)]
    return np.array(pts), np.array(segs), seeds, n_arc


def _triangulate_quadrant(spec: CellSpec):
    pts, segs, seeds, _ = _quadrant_pslg(spec)
    g = spec.density
    data = {"vertices": pts, "segments": segs}
    max_area = math.sqrt(3) / 4 * g * g
    opts = f"pq30Ya{max_area:.15f}Q"
    if seeds:
        data["regions"] = np.array([[x, y, tag, 0] for (x, y), tag in seeds], float)
        opts = "A" + opts
    out = triangle.triangulate(data, opts)
    tri = out["triangles"]
    if seeds:
        reg = out["triangle_attributes"][:, 0].astype(int)
    else:
        reg = np.zeros(len(tri), int)
    return out["vertices"], tri, reg


def build_cell(spec: CellSpec) -> CellMesh:
    """Triangulate ``spec`` into a conforming periodic :class:`CellMesh`."""
    v, tri, reg = _triangulate_quadrant(spec)
    W, H = spec.width / 2.0, spec.height / 2.0
    # snap coordinates that are on the quadrant boundary lines
    v = v.copy()
    for col, val in ((0, 0.0), (0, W), (1, 0.0), (1, H)):
        m = np.abs(v[:, col] - val) < 1e-12 * max(W, H, 1.0)
        v[m, col] = val

    key_to_id: dict[tuple[float, float], int] = {}
    nodes: list[tuple[float, float]] = []
    tris: list[np.ndarray] = []
    regs: list[np.ndarray] = []
    for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
        ids = np.empty(len(v), int)
        for k, (x, y) in enumerate(v):
            p = (float(sx * x) + 0.0, float(sy * y) + 0.0)
            j = key_to_id.get(p)
            if j is None:
                j = len(nodes)
                key_to_id[p] = j
                nodes.append(p)
            ids[k] = j
        t = ids[tri]
        if sx * sy < 0:
            t = t[:, [0, 2, 1]]
        tris.append(t)
        regs.append(reg)
    nodes_arr = np.array(nodes)
    tris_arr = np.vstack(tris)
    regs_arr = np.concatenate(regs)

    # stable ordering: sort nodes lexicographically by (y, x)
    order = np.lexsort((nodes_arr[:, 0], nodes_arr[:, 1]))
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    nodes_arr = nodes_arr[order]
    tris_arr = inv[tris_arr]
    t_order = np.lexsort((tris_arr[:, 2], tris_arr[:, 1], tris_arr[:, 0], regs_arr))
    tris_arr = tris_arr[t_order]
    regs_arr = regs_arr[t_order]

    pairs = _periodic_pairs(nodes_arr, W, H)
    corners = np.array([key_index(nodes_arr, (-W, -H)), key_index(nodes_arr, (W, -H)),
                        key_index(nodes_arr, (W, H)), key_index(nodes_arr, (-W, H))])
    edges = _particle_boundary(tris_arr, regs_arr)
    mesh = CellMesh(nodes_arr, tris_arr, regs_arr, spec.width, spec.height,
                    edges, pairs, corners, spec)
    mesh.validate()
    return mesh


def key_index(nodes: np.ndarray, p) -> int:
    d = np.abs(nodes - np.asarray(p)).sum(axis=1)
    j = int(np.argmin(d))
    if d[j] > 1e-12:
        raise MeshError(f"no node at {p}")
    return j


def _periodic_pairs(x: np.ndarray, W: float, H: float) -> np.ndarray:
    pairs = []
    left = np.flatnonzero(x[:, 0] == -W)
    right = np.flatnonzero(x[:, 0] == W)
    bottom = np.flatnonzero(x[:, 1] == -H)
    top = np.flatnonzero(x[:, 1] == H)
    for masters, slaves, col in ((left, right, 1), (bottom, top, 0)):
        if len(masters) != len(slaves):
            raise MeshError("opposite edges carry different node counts")
        lookup = {float(x[j, col]): j for j in masters}
        for s in slaves:
            m = lookup.get(float(x[s, col]))
            if m is None:
                raise MeshError("opposite edges carry different node traces")
            pairs.append((m, s))
    return np.array(pairs, int).reshape(-1, 2)


def _particle_boundary(tris: np.ndarray, regs: np.ndarray) -> np.ndarray:
    """Oriented edges of particle triangles not shared with another particle triangle."""
    count: dict[tuple[int, int], int] = {}
    oriented = []
    for t in tris[regs == PARTICLE]:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            k = (min(a, b), max(a, b))
            count[k] = count.get(k, 0) + 1
            oriented.append((int(a), int(b)))
    return np.array([e for e in oriented if count[(min(e), max(e))] == 1],
                    int).reshape(-1, 2)


@dataclass(frozen=True)
class QualityReport:
    min_angle_deg: float
    max_aspect_ratio: float
    n_elements: int
    n_nodes: int
    min_edge: float
    max_edge: float


def mesh_quality(mesh: CellMesh) -> QualityReport:
    """Angle and aspect-ratio statistics; raises on degenerate triangles."""
    mesh.validate()
    p = mesh.nodes[mesh.triangles]
    e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
    L = np.linalg.norm(e, axis=2)
    angles = []
    for k in range(3):
        u, w = -e[:, k - 1], e[:, k]
        c = (u * w).sum(1) / (L[:, k - 1] * L[:, k])
        angles.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
    angles = np.array(angles)
    area = mesh.signed_areas()
    # circumradius / (2 * inradius), equal to 1 for the equilateral triangle
    s = L.sum(1) / 2
    inr = area / s
    circ = L.prod(1) / (4 * area)
    return QualityReport(float(angles.min()), float((circ / (2 * inr)).max()),
                         mesh.n_triangles, mesh.n_nodes, float(L.min()), float(L.max()))


def mesh_from_arrays(nodes, triangles, regions, width=1.0, height=1.0) -> CellMesh:
    """Wrap hand-built arrays, deriving periodic pairs from node positions."""
    nodes = np.asarray(nodes, float)
    triangles = np.asarray(triangles, int)
    regions = np.asarray(regions, int)
    W, H = width / 2.0, height / 2.0
    pairs = _periodic_pairs(nodes, W, H)
    corners = np.array([key_index(nodes, (sx * W, sy * H))
                        for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))])
    edges = _particle_boundary(triangles, regions)
    mesh = CellMesh(nodes, triangles, regions, width, height, edges, pairs, corners)
    mesh.validate()
    return mesh


def write_mesh(mesh: CellMesh, path) -> None:
    """Plain-text export: node, triangle and periodic-pair tables."""
    with open(path, "w") as fh:
        fh.write(f"# cell {float(mesh.width)!r} {float(mesh.height)!r}\n")
        fh.write(f"nodes {mesh.n_nodes}\n")
        for i, (x, y) in enumerate(mesh.nodes):
            fh.write(f"{i} {float(x)!r} {float(y)!r}\n")
        fh.write(f"triangles {mesh.n_triangles}\n")
        for i, (t, r) in enumerate(zip(mesh.triangles, mesh.regions)):
            tag = "particle" if r == PARTICLE else "fluid"
            fh.write(f"{i} {t[0]} {t[1]} {t[2]} {tag}\n")
        fh.write(f"periodic {len(mesh.periodic_pairs)}\n")
        for m, s in mesh.periodic_pairs:
            fh.write(f"{m} {s}\n")


def read_mesh(path) -> CellMesh:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    width, height = float(lines[0][2]), float(lines[0][3])
    i = 1
    n = int(lines[i][1]); i += 1
    nodes = np.array([[float(t[1]), float(t[2])] for t in lines[i:i + n]]); i += n
    n = int(lines[i][1]); i += 1
    rows = lines[i:i + n]; i += n
    tris = np.array([[int(t[1]), int(t[2]), int(t[3])] for t in rows], int).reshape(-1, 3)
    regs = np.array([PARTICLE if t[4] == "particle" else FLUID for t in rows], int)
    n = int(lines[i][1]); i += 1
    pairs = np.array([[int(t[0]), int(t[1])] for t in lines[i:i + n]], int).reshape(-1, 2)
    W, H = width / 2.0, height / 2.0
    corners = np.array([key_index(nodes, (sx * W, sy * H))
                        for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))])
    mesh = CellMesh(nodes, tris, regs, width, height,
                    _particle_boundary(tris, regs), pairs, corners)
    mesh.validate()
    return mesh
