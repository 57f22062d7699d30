"""Staggered finite element spaces U_h, V_h and P_h on a StaggeredMesh.

U (scalar, P_k per triangle): k+1 moments on the triangle's primal edge
against an orthonormal Legendre frame, plus moments against P_{k-1}(tau).
V (vector, [P_k]^2 per triangle): k+1 normal moments on each of the two dual
edges, plus vector moments against [P_{k-1}(tau)]^2.
P (scalar, P_k per primal cell): modal coefficients of scaled monomials.

U and V shape functions are the dual basis of their moment functionals,
expressed in an orthonormal modal frame of the reference triangle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .mesh import StaggeredMesh
from .quadrature import segment_rule, triangle_rule

SUPPORTED_DEGREES = (1, 2, 3)


def n_poly(k):
    return (k + 1) * (k + 2) // 2


@lru_cache(maxsize=None)
def exponents(k):
    return tuple((d - j, j) for d in range(k + 1) for j in range(d + 1))


def monomials(xi, k):
    """Values (..., m) and gradients (..., m, 2) of xi^a eta^b, a + b <= k."""
    x, y = xi[..., 0], xi[..., 1]
    exps = exponents(k)
    vals = np.empty(xi.shape[:-1] + (len(exps),))
    grads = np.empty(xi.shape[:-1] + (len(exps), 2))
    xp = [np.ones_like(x)]
    yp = [np.ones_like(y)]
    for _ in range(k):
        xp.append(xp[-1] * x)
        yp.append(yp[-1] * y)
    for m, (a, b) in enumerate(exps):
        vals[..., m] = xp[a] * yp[b]
        grads[..., m, 0] = a * xp[a - 1] * yp[b] if a > 0 else 0.0
        grads[..., m, 1] = b * xp[a] * yp[b - 1] if b > 0 else 0.0
    return vals, grads


@lru_cache(maxsize=None)
def _orthonormal_coeffs(k):
    q = triangle_rule(2 * k)
    v, _ = monomials(q.points, k)
    gram = (v * q.weights[:, None]).T @ v
    L = np.linalg.cholesky(gram)
    R = np.linalg.inv(L).T
    R.setflags(write=False)
    return R


def modal(xi, k):
    """Orthonormal (on the reference triangle) basis of P_k: values, gradients."""
    R = _orthonormal_coeffs(k)
    v, g = monomials(xi, k)
    return v @ R, np.einsum("...md,mn->...nd", g, R)


def legendre_on_edge(t, k, length):
    """L2(e)-orthonormal Legendre polynomials at parameter t in [0, 1]."""
    x = 2.0 * np.asarray(t) - 1.0
    out = np.empty(np.shape(x) + (k + 1,))
    for i in range(k + 1):
        c = np.zeros(i + 1)
        c[i] = 1.0
        out[..., i] = np.polynomial.legendre.legval(x, c)
    scale = np.sqrt((2.0 * np.arange(k + 1) + 1.0))
    return out * scale / np.sqrt(np.asarray(length))[..., None]


@dataclass(frozen=True)
class LocalBasis:
    """Dual shape functions per triangle as coefficients in the modal frame.

    ``coeffs[t]`` maps local shape index -> modal coefficients: shape j equals
    sum_m psi_m * coeffs[t, m, j] (for V, m runs over component-major
    [psi e_x, psi e_y]).
    """

    kind: str
    k: int
    coeffs: np.ndarray
    cond: np.ndarray
    mesh: StaggeredMesh = field(repr=False)

    @property
    def n_local(self):
        return self.coeffs.shape[2]

    def _check(self, tri_ids):
        tri_ids = np.asarray(tri_ids)
        if tri_ids.size and (tri_ids.min() < 0 or tri_ids.max() >= self.mesh.n_tris):
            raise IndexError("unknown triangle id")
        return tri_ids

    def values_ref(self, tri_ids, xi):
        """Shape values at reference points: (n, q, nloc) for U, (n, q, nloc, 2) for V."""
        tri_ids = self._check(tri_ids)
        psi, _ = modal(np.asarray(xi, dtype=float), self.k)
        C = self.coeffs[tri_ids]
        shared = psi.ndim == 2
        if self.kind == "U":
            return np.einsum("qm,nml->nql" if shared else "nqm,nml->nql", psi, C)
        nm = psi.shape[-1]
        out = [np.einsum("qm,nml->nql" if shared else "nqm,nml->nql", psi, C[:, c * nm:(c + 1) * nm])
               for c in range(2)]
        return np.stack(out, axis=-1)

    def grads_ref(self, tri_ids, xi):
        """Physical gradients at reference points.

        U: (n, q, nloc, 2).  V: (n, q, nloc, 2, 2) with [..., c, d] = d v_c / d x_d.
        """
        tri_ids = self._check(tri_ids)
        _, dpsi = modal(np.asarray(xi, dtype=float), self.k)
        Binv = self.mesh.Binv[tri_ids]
        if dpsi.ndim == 3:
            gphys = np.einsum("nji,qmj->nqmi", Binv, dpsi)
        else:
            gphys = np.einsum("nji,nqmj->nqmi", Binv, dpsi)
        C = self.coeffs[tri_ids]
        if self.kind == "U":
            return np.einsum("nqmi,nml->nqli", gphys, C)
        nm = gphys.shape[2]
        out = [np.einsum("nqmi,nml->nqli", gphys, C[:, c * nm:(c + 1) * nm]) for c in range(2)]
        return np.stack(out, axis=-2)

    def values_at(self, tri_ids, x):
        """Shape values at physical points x (n, q, 2)."""
        return self.values_ref(tri_ids, self.mesh.to_reference(tri_ids, x))

    def grads_at(self, tri_ids, x):
        return self.grads_ref(tri_ids, self.mesh.to_reference(tri_ids, x))


def eval_basis(basis: LocalBasis, triangle, points):
    """Values and physical gradients of all shape functions on one triangle."""
    tri = np.atleast_1d(triangle)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return basis.values_ref(tri, pts)[0], basis.grads_ref(tri, pts)[0]


def _edge_points(mesh, edges, tri_ids, rule):
    """Quadrature points of edges (global orientation lo -> hi) in reference coords of tri_ids."""
    P = mesh.points
    A = P[edges[:, 0]]
    Bp = P[edges[:, 1]]
    x = A[:, None, :] + rule.points[None, :, None] * (Bp - A)[:, None, :]
    return x, mesh.to_reference(tri_ids, x)


def edge_functionals_U(mesh, k):
    """Moment matrix rows for the primal edge of every triangle: (nt, k+1, nm)."""
    rule = segment_rule(2 * k + 2)
    tri = np.arange(mesh.n_tris)
    edges = mesh.fu_edges[mesh.tri_fu]
    h = mesh.h_fu[mesh.tri_fu]
    _, xi = _edge_points(mesh, edges, tri, rule)
    psi, _ = modal(xi, k)
    L = legendre_on_edge(rule.points, k, h[:, None])
    return np.einsum("q,nqi,nqm->nim", rule.weights, L, psi) * h[:, None, None]


def build_local_basis(mesh: StaggeredMesh, kind: str, k: int) -> LocalBasis:
    if k not in SUPPORTED_DEGREES:
        raise ValueError(f"degree k={k} not supported (use one of {SUPPORTED_DEGREES})")
    nt = mesh.n_tris
    nm = n_poly(k)
    qt = triangle_rule(2 * k)
    psi_t, _ = modal(qt.points, k)
    if k >= 1:
        psi_low, _ = modal(qt.points, k - 1)
    # int_tau q_j psi_m dx with q_j orthonormal on tau: sqrt(2|tau|) * reference integral
    ref_int = np.einsum("q,qj,qm->jm", qt.weights, psi_low, psi_t)
    scale_int = np.sqrt(2.0 * mesh.tri_area)[:, None, None]
    if kind == "U":
        D = np.concatenate([edge_functionals_U(mesh, k), scale_int * ref_int[None]], axis=1)
    elif kind == "V":
        rule = segment_rule(2 * k + 2)
        tri = np.arange(nt)
        blocks = []
        for loc in range(2):
            e = mesh.tri_fp[:, loc]
            h = mesh.h_fp[e]
            n = mesh.fp_normal[e]
            _, xi = _edge_points(mesh, mesh.fp_edges[e], tri, rule)
            psi, _ = modal(xi, k)
            L = legendre_on_edge(rule.points, k, h[:, None])
            base = np.einsum("q,nqi,nqm->nim", rule.weights, L, psi) * h[:, None, None]
            blocks.append(np.concatenate([base * n[:, 0, None, None], base * n[:, 1, None, None]], axis=2))
        nlow = ref_int.shape[0]
        inter = np.zeros((nt, 2 * nlow, 2 * nm))
        inter[:, :nlow, :nm] = scale_int * ref_int
        inter[:, nlow:, nm:] = scale_int * ref_int
        D = np.concatenate(blocks + [inter], axis=1)
    else:
        raise ValueError(f"no dual basis for space {kind!r}")
    C = np.linalg.inv(D)
    cond = np.linalg.cond(D)
    C.setflags(write=False)
    return LocalBasis(kind, k, C, cond, mesh)


@dataclass(frozen=True)
class DofMap:
    """Global numbering of one space on one subdomain mesh.

    U/V: edge-moment DOFs first (edge-major), then interior moments
    (triangle-major).  P: cell-major modal coefficients.  ``l2g`` has one row
    per triangle.  ``constrained`` marks DOFs fixed strongly (Dirichlet).
    """

    kind: str
    k: int
    l2g: np.ndarray
    ndof: int
    n_edge_dofs: int
    constrained: np.ndarray
    mesh: StaggeredMesh = field(repr=False)
    basis: LocalBasis | None = field(default=None, repr=False)

    @property
    def free(self):
        return np.flatnonzero(~self.constrained)

    @property
    def n_free(self):
        return int(np.count_nonzero(~self.constrained))

    def edge_dofs(self, edges):
        """DOF indices of the given edges, shape (len(edges), k+1)."""
        edges = np.asarray(edges)
        return edges[:, None] * (self.k + 1) + np.arange(self.k + 1)

    def classify(self, dof):
        """('edge', e, m), ('interior', tau, m) or ('cell', c, m)."""
        if self.kind == "P":
            n = n_poly(self.k)
            return ("cell", dof // n, dof % n)
        if dof < self.n_edge_dofs:
            return ("edge", dof // (self.k + 1), dof % (self.k + 1))
        nint = (self.l2g.shape[1] - (self.k + 1) * (1 if self.kind == "U" else 2))
        r = dof - self.n_edge_dofs
        return ("interior", r // nint, r % nint)

    # -- evaluation helpers -------------------------------------------------
    def values_ref(self, tri_ids, xi):
        if self.kind == "P":
            return p_values(self.mesh, self.k, tri_ids, self.mesh.to_physical(tri_ids, xi))[0]
        return self.basis.values_ref(tri_ids, xi)

    def grads_ref(self, tri_ids, xi):
        if self.kind == "P":
            return p_values(self.mesh, self.k, tri_ids, self.mesh.to_physical(tri_ids, xi))[1]
        return self.basis.grads_ref(tri_ids, xi)

    def values_at(self, tri_ids, x):
        if self.kind == "P":
            return p_values(self.mesh, self.k, tri_ids, x)[0]
        return self.basis.values_at(tri_ids, x)

    def grads_at(self, tri_ids, x):
        if self.kind == "P":
            return p_values(self.mesh, self.k, tri_ids, x)[1]
        return self.basis.grads_at(tri_ids, x)


def p_values(mesh, k, tri_ids, x):
    """Scaled monomials ((x - c)/h_E)^a ((y - c)/h_E)^b of the cell holding each triangle."""
    cells = mesh.tri_cell[tri_ids]
    hE = mesh.h_cell[cells]
    z = (x - mesh.centers[cells][:, None, :]) / hE[:, None, None]
    v, g = monomials(z, k)
    return v, g / hE[:, None, None, None]


def build_dofmap(mesh: StaggeredMesh, space: str, k: int, strong_zero_tags=(),
                 strong_edge_filter=None) -> DofMap:
    """Number the DOFs of ``space`` in {U, V, P}.

    Edge-moment DOFs of U on primal edges tagged in ``strong_zero_tags`` are
    constrained; ``strong_edge_filter(midpoint) -> bool`` narrows the set.
    """
    if k == 0:
        raise ValueError("k = 0 is not supported: interior moment counts assume k >= 1")
    if k not in SUPPORTED_DEGREES:
        raise ValueError(f"degree k={k} not supported (use one of {SUPPORTED_DEGREES})")
    nt = mesh.n_tris
    ke = k + 1
    if space == "U":
        nint = k * (k + 1) // 2
        n_edge = mesh.n_fu * ke
        edge_part = mesh.tri_fu[:, None] * ke + np.arange(ke)
        int_part = n_edge + np.arange(nt)[:, None] * nint + np.arange(nint)
        l2g = np.hstack([edge_part, int_part])
        ndof = n_edge + nt * nint
        constrained = np.zeros(ndof, dtype=bool)
        if strong_zero_tags:
            edges = mesh.fu_with_tag(*strong_zero_tags)
            if strong_edge_filter is not None and len(edges):
                mid = 0.5 * (mesh.points[mesh.fu_edges[edges, 0]] + mesh.points[mesh.fu_edges[edges, 1]])
                edges = edges[np.array([bool(strong_edge_filter(m)) for m in mid], dtype=bool)]
            if len(edges):
                constrained[(edges[:, None] * ke + np.arange(ke)).ravel()] = True
        basis = build_local_basis(mesh, "U", k)
    elif space == "V":
        nint = k * (k + 1)
        n_edge = mesh.n_fp * ke
        e1 = mesh.tri_fp[:, 0:1] * ke + np.arange(ke)
        e2 = mesh.tri_fp[:, 1:2] * ke + np.arange(ke)
        int_part = n_edge + np.arange(nt)[:, None] * nint + np.arange(nint)
        l2g = np.hstack([e1, e2, int_part])
        ndof = n_edge + nt * nint
        constrained = np.zeros(ndof, dtype=bool)
        basis = build_local_basis(mesh, "V", k)
    elif space == "P":
        npc = n_poly(k)
        l2g = mesh.tri_cell[:, None] * npc + np.arange(npc)
        ndof = mesh.primal.n_cells * npc
        n_edge = 0
        constrained = np.zeros(ndof, dtype=bool)
        basis = None
    else:
        raise ValueError(f"unknown space {space!r}")
    l2g.setflags(write=False)
    constrained.setflags(write=False)
    return DofMap(space, k, l2g, int(ndof), int(n_edge), constrained, mesh, basis)
