"""Primal polygonal meshes, their staggered triangular subdivision, and the
interface glue between a Stokes and a Darcy mesh.

Every primal cell E is split into triangles by joining an interior point to
its vertices.  Primal edges form the set ``fu`` (one per triangle), the new
edges to the interior point form ``fp`` (two per triangle).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GAMMA_S = "GammaS"
GAMMA_D = "GammaD"
INTERFACE = "Interface"
INTERIOR = "Interior"
TAGS = (GAMMA_S, GAMMA_D, INTERFACE)

STOKES = "Stokes"
DARCY = "Darcy"

GEOM_TOL = 1e-10


class MeshError(ValueError):
    """Invalid mesh geometry or topology."""


class GeometryMismatchError(MeshError):
    """Interface traces of the two subdomain meshes do not coincide."""


def _signed_area(xy):
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


def _is_simple(xy):
    n = len(xy)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(xy[i], xy[(i + 1) % n], xy[j], xy[(j + 1) % n]):
                return False
    return True


def _edge_key(i, j):
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class PrimalMesh:
    """Polygonal partition of one subdomain.

    ``cells`` hold counter-clockwise vertex indices; ``boundary_tags`` maps a
    sorted vertex pair to one of ``TAGS``.
    """

    vertices: np.ndarray
    cells: tuple
    boundary_tags: dict
    subdomain: str = STOKES

    def __post_init__(self):
        self.vertices.setflags(write=False)

    @property
    def n_cells(self):
        return len(self.cells)

    def edges(self):
        """Unique primal edges as sorted vertex pairs, in first-seen order."""
        seen = {}
        for cell in self.cells:
            n = len(cell)
            for a in range(n):
                key = _edge_key(cell[a], cell[(a + 1) % n])
                if key not in seen:
                    seen[key] = len(seen)
        return list(seen)

    def validate(self):
        """Raise MeshError if any invariant is violated."""
        count = {}
        for c, cell in enumerate(self.cells):
            if len(cell) < 3:
                raise MeshError(f"cell {c} has fewer than 3 vertices")
            xy = self.vertices[list(cell)]
            if _signed_area(xy) <= 0.0:
                raise MeshError(f"cell {c} has non-positive signed area (inverted)")
            if not _is_simple(xy):
                raise MeshError(f"cell {c} is self-intersecting")
            n = len(cell)
            for a in range(n):
                key = _edge_key(cell[a], cell[(a + 1) % n])
                count[key] = count.get(key, 0) + 1
        for key, m in count.items():
            if m > 2:
                raise MeshError(f"edge {key} shared by {m} cells")
            tagged = key in self.boundary_tags
            if m == 1 and not tagged:
                raise MeshError(f"boundary edge {key} carries no tag")
            if m == 2 and tagged:
                raise MeshError(f"interior edge {key} carries a boundary tag")
        for key, tag in self.boundary_tags.items():
            if tag not in TAGS:
                raise MeshError(f"unknown boundary tag {tag!r} on edge {key}")
            if key not in count:
                raise MeshError(f"tagged edge {key} is not a cell edge")
        return self


def generate_primal(kind, nx, ny, domain=((0.0, 1.0), (0.0, 1.0)), distortion=0.0,
                    seed=0, subdomain=STOKES, interface_side=None, path=None):
    """Structured primal mesh of an axis-aligned rectangle.

    kind is one of ``rectangular``, ``triangular``, ``distorted`` or
    ``polygonal-file`` (then ``path`` names a poly2d file).  Boundary edges on
    ``interface_side`` ('top', 'bottom', 'left', 'right') are tagged Interface,
    the rest GammaS or GammaD according to ``subdomain``.
    """
    if kind == "polygonal-file":
        if path is None:
            raise ValueError("polygonal-file mesh needs a path")
        return read_poly2d(path, subdomain=subdomain).validate()
    if kind not in ("rectangular", "triangular", "distorted"):
        raise ValueError(f"unknown mesh kind {kind!r}")
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be at least 1")
    if not 0.0 <= distortion < 0.5:
        raise ValueError("distortion must lie in [0, 0.5)")
    (x0, x1), (y0, y1) = domain
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    if kind == "distorted" and distortion > 0.0:
        rng = np.random.default_rng(seed)
        dmax = distortion * min((x1 - x0) / nx, (y1 - y0) / ny)
        offsets = rng.uniform(-dmax, dmax, size=verts.shape)
        interior = np.zeros(len(verts), dtype=bool)
        for i in range(1, nx):
            for j in range(1, ny):
                interior[vid(i, j)] = True
        verts = verts + offsets * interior[:, None]

    cells = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if kind == "triangular":
                cells.append((a, b, c))
                cells.append((a, c, d))
            else:
                cells.append((a, b, c, d))

    outer = GAMMA_S if subdomain == STOKES else GAMMA_D
    tags = {}
    sides = {
        "bottom": [(vid(i, 0), vid(i + 1, 0)) for i in range(nx)],
        "top": [(vid(i, ny), vid(i + 1, ny)) for i in range(nx)],
        "left": [(vid(0, j), vid(0, j + 1)) for j in range(ny)],
        "right": [(vid(nx, j), vid(nx, j + 1)) for j in range(ny)],
    }
    if interface_side is not None and interface_side not in sides:
        raise ValueError(f"unknown interface side {interface_side!r}")
    for side, edges in sides.items():
        tag = INTERFACE if side == interface_side else outer
        for a, b in edges:
            tags[_edge_key(a, b)] = tag
    return PrimalMesh(verts, tuple(cells), tags, subdomain).validate()


@dataclass(frozen=True)
class StaggeredMesh:
    """Triangular subdivision of a primal mesh with classified edge sets.

    Triangle ``t`` has vertices (a, b, nu) counter-clockwise; local edge 0 is
    the primal edge a-b, local edges 1 (b-nu) and 2 (nu-a) are dual edges.
    Edge arrays store sorted endpoint pairs (lower point index first).
    ``*_tris[:, 0]`` is the triangle whose outward normal equals the edge's
    fixed normal; ``*_tris[:, 1]`` is the other one, or -1 on the boundary.
    """

    primal: PrimalMesh
    points: np.ndarray
    centers: np.ndarray
    tris: np.ndarray
    tri_cell: np.ndarray
    tri_fu: np.ndarray
    tri_fp: np.ndarray
    fu_edges: np.ndarray
    fu_tris: np.ndarray
    fu_normal: np.ndarray
    fu_tag: np.ndarray
    fp_edges: np.ndarray
    fp_tris: np.ndarray
    fp_normal: np.ndarray
    cell_tris: tuple
    h_tri: np.ndarray
    h_fu: np.ndarray
    h_fp: np.ndarray
    h_cell: np.ndarray
    tri_area: np.ndarray
    # affine maps x = x0 + B xi of every triangle
    x0: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    Binv: np.ndarray = field(repr=False)

    @property
    def n_tris(self):
        return len(self.tris)

    @property
    def n_fu(self):
        return len(self.fu_edges)

    @property
    def n_fp(self):
        return len(self.fp_edges)

    @property
    def h(self):
        return float(self.h_tri.max())

    @property
    def subdomain(self):
        return self.primal.subdomain

    @property
    def fu_interior(self):
        return np.flatnonzero(self.fu_tris[:, 1] >= 0)

    def fu_with_tag(self, *tags):
        return np.flatnonzero(np.isin(self.fu_tag, tags))

    def to_physical(self, tri_ids, xi):
        """Map reference points xi (n, q, 2) or (q, 2) on triangles to physical."""
        xi = np.asarray(xi)
        if xi.ndim == 2:
            return self.x0[tri_ids][:, None, :] + np.einsum("nij,qj->nqi", self.B[tri_ids], xi)
        return self.x0[tri_ids][:, None, :] + np.einsum("nij,nqj->nqi", self.B[tri_ids], xi)

    def to_reference(self, tri_ids, x):
        """Inverse affine map of physical points x (n, q, 2)."""
        return np.einsum("nij,nqj->nqi", self.Binv[tri_ids], x - self.x0[tri_ids][:, None, :])


def _kernel_radius(xy, p):
    """Signed radius of the largest ball about p inside every edge half-plane."""
    nxt = np.roll(xy, -1, axis=0)
    d = nxt - xy
    lengths = np.hypot(d[:, 0], d[:, 1])
    # inward normal of a CCW polygon edge is the left normal
    cross = d[:, 0] * (p[1] - xy[:, 1]) - d[:, 1] * (p[0] - xy[:, 0])
    return float(np.min(cross / lengths))


def _incenter_of_kernel(xy):
    """Chebyshev center of the kernel (intersection of edge half-planes)."""
    from scipy.optimize import linprog

    nxt = np.roll(xy, -1, axis=0)
    d = nxt - xy
    lengths = np.hypot(d[:, 0], d[:, 1])
    nin = np.column_stack([-d[:, 1], d[:, 0]]) / lengths[:, None]
    # maximize r subject to nin . (p - xy_i) >= r
    A = np.column_stack([-nin, np.ones(len(xy))])
    b = -np.sum(nin * xy, axis=1)
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=A, b_ub=b, bounds=[(None, None)] * 2 + [(0, None)],
                  method="highs")
    if not res.success:
        return xy.mean(axis=0)
    return res.x[:2]


def _polygon_centroid(xy):
    x, y = xy[:, 0], xy[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    a = 0.5 * cr.sum()
    return np.array([np.sum((x + xn) * cr), np.sum((y + yn) * cr)]) / (6.0 * a)


def _diameter(xy):
    diff = xy[:, None, :] - xy[None, :, :]
    return float(np.sqrt(np.max(np.sum(diff * diff, axis=-1))))


def build_staggered(primal: PrimalMesh, point_rule="centroid") -> StaggeredMesh:
    """Subdivide every primal cell about an interior point."""
    if point_rule not in ("centroid", "incenter-of-kernel"):
        raise ValueError(f"unknown point rule {point_rule!r}")
    V = primal.vertices
    nv = len(V)
    nc = primal.n_cells
    centers = np.empty((nc, 2))
    h_cell = np.empty(nc)
    for c, cell in enumerate(primal.cells):
        xy = V[list(cell)]
        p = _polygon_centroid(xy) if point_rule == "centroid" else _incenter_of_kernel(xy)
        if _kernel_radius(xy, p) <= 0.0:
            raise MeshError(f"interior point of cell {c} lies outside the cell kernel")
        centers[c] = p
        h_cell[c] = _diameter(xy)
    points = np.vstack([V, centers])

    tris, tri_cell = [], []
    for c, cell in enumerate(primal.cells):
        n = len(cell)
        for a in range(n):
            tris.append((cell[a], cell[(a + 1) % n], nv + c))
            tri_cell.append(c)
    tris = np.array(tris, dtype=np.int64)
    tri_cell = np.array(tri_cell, dtype=np.int64)
    nt = len(tris)

    # edge tables; local edge j of triangle (v0, v1, v2) runs v_j -> v_{j+1}
    fu_index, fp_index = {}, {}
    fu_list, fp_list = [], []
    fu_sides, fp_sides = [], []
    tri_fu = np.empty(nt, dtype=np.int64)
    tri_fp = np.empty((nt, 2), dtype=np.int64)
    for t, (a, b, m) in enumerate(tris):
        for loc, (p, q) in enumerate(((a, b), (b, m), (m, a))):
            key = _edge_key(int(p), int(q))
            # the triangle traverses lo->hi iff its outward normal is the right normal of lo->hi
            forward = p < q
            if loc == 0:
                table, lst, sides = fu_index, fu_list, fu_sides
            else:
                table, lst, sides = fp_index, fp_list, fp_sides
            if key not in table:
                table[key] = len(lst)
                lst.append(key)
                sides.append([-1, -1])
            e = table[key]
            slot = 0 if forward else 1
            if sides[e][slot] != -1:
                raise MeshError(f"edge {key} traversed twice in the same direction (non-conforming cells)")
            sides[e][slot] = t
            if loc == 0:
                tri_fu[t] = e
            else:
                tri_fp[t, loc - 1] = e

    fu_edges = np.array(fu_list, dtype=np.int64)
    fp_edges = np.array(fp_list, dtype=np.int64)
    fu_sides = np.array(fu_sides, dtype=np.int64)
    fp_sides = np.array(fp_sides, dtype=np.int64)

    def right_normals(edges):
        d = points[edges[:, 1]] - points[edges[:, 0]]
        L = np.hypot(d[:, 0], d[:, 1])
        return np.column_stack([d[:, 1], -d[:, 0]]) / L[:, None], L

    fu_normal, h_fu = right_normals(fu_edges)
    fp_normal, h_fp = right_normals(fp_edges)

    if np.any(fp_sides < 0):
        raise MeshError("dual edge not shared by two triangles")
    fu_tris = fu_sides.copy()
    boundary = (fu_sides[:, 0] < 0) | (fu_sides[:, 1] < 0)
    # boundary edge traversed hi->lo: flip the normal so it points outward
    flip = boundary & (fu_sides[:, 0] < 0)
    fu_normal[flip] *= -1.0
    fu_tris[flip, 0] = fu_sides[flip, 1]
    fu_tris[flip, 1] = -1

    fu_tag = np.full(len(fu_edges), INTERIOR, dtype=object)
    for e in np.flatnonzero(boundary):
        key = tuple(int(v) for v in fu_edges[e])
        if key not in primal.boundary_tags:
            raise MeshError(f"boundary edge {key} carries no tag")
        fu_tag[e] = primal.boundary_tags[key]

    P = points[tris]
    x0 = P[:, 0, :].copy()
    B = np.stack([P[:, 1, :] - P[:, 0, :], P[:, 2, :] - P[:, 0, :]], axis=-1)
    det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    if np.any(det <= 0.0):
        bad = int(tri_cell[np.argmin(det)])
        raise MeshError(f"degenerate or inverted subdivision triangle in cell {bad}")
    Binv = np.linalg.inv(B)
    tri_area = 0.5 * det
    h_tri = np.max(np.stack([
        np.hypot(*(P[:, 1] - P[:, 0]).T),
        np.hypot(*(P[:, 2] - P[:, 1]).T),
        np.hypot(*(P[:, 0] - P[:, 2]).T)]), axis=0)

    cell_tris = tuple(tuple(int(t) for t in np.flatnonzero(tri_cell == c)) for c in range(nc))
    arrays = [points, centers, tris, tri_cell, tri_fu, tri_fp, fu_edges, fu_tris, fu_normal,
              fp_edges, fp_sides, fp_normal, h_tri, h_fu, h_fp, h_cell, tri_area, x0, B, Binv]
    for arr in arrays:
        arr.setflags(write=False)
    return StaggeredMesh(primal=primal, points=points, centers=centers, tris=tris,
                         tri_cell=tri_cell, tri_fu=tri_fu, tri_fp=tri_fp, fu_edges=fu_edges,
                         fu_tris=fu_tris, fu_normal=fu_normal, fu_tag=fu_tag,
                         fp_edges=fp_edges, fp_tris=fp_sides, fp_normal=fp_normal,
                         cell_tris=cell_tris, h_tri=h_tri, h_fu=h_fu, h_fp=h_fp,
                         h_cell=h_cell, tri_area=tri_area, x0=x0, B=B, Binv=Binv)


@dataclass(frozen=True)
class GlueSegment:
    a: np.ndarray
    b: np.ndarray
    length: float
    stokes_edge: int
    darcy_edge: int
    stokes_tri: int
    darcy_tri: int


@dataclass(frozen=True)
class InterfaceGlue:
    """Common refinement of the Stokes and Darcy interface edge partitions."""

    segments: tuple
    n_s: np.ndarray
    t: np.ndarray
    length: float

    @property
    def n_d(self):
        return -self.n_s

    def __len__(self):
        return len(self.segments)

    def lengths(self):
        return np.array([s.length for s in self.segments])


def build_interface_glue(stokes: StaggeredMesh, darcy: StaggeredMesh) -> InterfaceGlue:
    """Intersect the two interface traces edge by edge along the line of Gamma."""
    es = stokes.fu_with_tag(INTERFACE)
    ed = darcy.fu_with_tag(INTERFACE)
    if len(es) == 0 or len(ed) == 0:
        raise GeometryMismatchError("a mesh has no Interface-tagged edges")
    ps = stokes.points[stokes.fu_edges[es]]
    pd = darcy.points[darcy.fu_edges[ed]]
    allp = np.vstack([ps.reshape(-1, 2), pd.reshape(-1, 2)])
    # line of Gamma through the two most distant interface points
    i0 = int(np.argmin(allp[:, 0] + allp[:, 1] * 1e-3))
    far = np.argmax(np.sum((allp - allp[i0]) ** 2, axis=1))
    origin = allp[i0]
    d = allp[far] - origin
    d = d / np.hypot(*d)
    normal_line = np.array([-d[1], d[0]])
    off = (allp - origin) @ normal_line
    if np.max(np.abs(off)) > GEOM_TOL:
        raise GeometryMismatchError("interface edges are not collinear")

    n_s = stokes.fu_normal[es[0]].copy()
    if abs(n_s @ normal_line) < 0.5:
        raise GeometryMismatchError("Stokes interface normal is not normal to Gamma")
    n_s = normal_line * np.sign(n_s @ normal_line)
    t = np.array([n_s[1], -n_s[0]])

    def intervals(p):
        s = (p - origin) @ d
        lo, hi = np.minimum(s[:, 0], s[:, 1]), np.maximum(s[:, 0], s[:, 1])
        order = np.argsort(lo, kind="stable")
        return lo, hi, order

    slo, shi, sord = intervals(ps)
    dlo, dhi, dord = intervals(pd)

    def coverage(lo, hi, order):
        start, end = lo[order[0]], hi[order[0]]
        for j in order[1:]:
            if lo[j] - end > GEOM_TOL:
                raise GeometryMismatchError("gap in interface trace")
            end = max(end, hi[j])
        return start, end

    s0, s1 = coverage(slo, shi, sord)
    d0, d1 = coverage(dlo, dhi, dord)
    if abs(s0 - d0) > GEOM_TOL or abs(s1 - d1) > GEOM_TOL:
        raise GeometryMismatchError(
            f"interface traces differ: Stokes [{s0:.3g}, {s1:.3g}] vs Darcy [{d0:.3g}, {d1:.3g}]")
    total = s1 - s0
    cut = 1e-12 * total

    segs = []
    i = j = 0
    while i < len(sord) and j < len(dord):
        a, b = sord[i], dord[j]
        lo = max(slo[a], dlo[b])
        hi = min(shi[a], dhi[b])
        if hi - lo > cut:
            e_s, e_d = int(es[a]), int(ed[b])
            segs.append(GlueSegment(
                a=origin + lo * d, b=origin + hi * d, length=float(hi - lo),
                stokes_edge=e_s, darcy_edge=e_d,
                stokes_tri=int(stokes.fu_tris[e_s, 0]), darcy_tri=int(darcy.fu_tris[e_d, 0])))
        if shi[a] < dhi[b]:
            i += 1
        else:
            j += 1
    return InterfaceGlue(tuple(segs), n_s, t, float(total))


@dataclass(frozen=True)
class RegularityReport:
    min_edge_ratio: float
    min_ball_ratio: float
    threshold: float

    @property
    def passed(self):
        return self.min_edge_ratio >= self.threshold and self.min_ball_ratio >= self.threshold


def check_regularity(mesh: StaggeredMesh, rho_threshold=0.0) -> RegularityReport:
    """Edge-to-diameter and inscribed-ball-to-diameter ratios of primal cells."""
    V = mesh.primal.vertices
    edge_ratio = np.inf
    ball_ratio = np.inf
    for c, cell in enumerate(mesh.primal.cells):
        xy = V[list(cell)]
        d = np.roll(xy, -1, axis=0) - xy
        he = np.hypot(d[:, 0], d[:, 1])
        hE = mesh.h_cell[c]
        edge_ratio = min(edge_ratio, float(he.min() / hE))
        ball_ratio = min(ball_ratio, _kernel_radius(xy, mesh.centers[c]) / hE)
    return RegularityReport(edge_ratio, ball_ratio, float(rho_threshold))


def write_poly2d(mesh: PrimalMesh, path):
    """Write the ``poly2d`` text format; coordinates use 17 significant digits."""
    lines = [f"poly2d {len(mesh.vertices)} {mesh.n_cells}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [" ".join(str(v) for v in (len(c), *c)) for c in mesh.cells]
    lines += [f"edge {i} {j} {tag}" for (i, j), tag in sorted(mesh.boundary_tags.items())]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_poly2d(path, subdomain=STOKES) -> PrimalMesh:
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip()]
    if not rows or rows[0][0] != "poly2d":
        raise MeshError(f"{path}: missing poly2d header")
    nv, nc = int(rows[0][1]), int(rows[0][2])
    verts = np.array([[float(r[0]), float(r[1])] for r in rows[1:1 + nv]])
    cells = []
    for r in rows[1 + nv:1 + nv + nc]:
        k = int(r[0])
        if len(r) != k + 1:
            raise MeshError(f"{path}: cell line {r} has wrong length")
        cells.append(tuple(int(v) for v in r[1:]))
    tags = {}
    for r in rows[1 + nv + nc:]:
        if r[0] != "edge" or len(r) != 4:
            raise MeshError(f"{path}: bad boundary line {r}")
        tags[_edge_key(int(r[1]), int(r[2]))] = r[3]
    return PrimalMesh(verts, tuple(cells), tags, subdomain)
