"""Interpolation operators, discrete norms and error records."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .femspace import DofMap, legendre_on_edge, modal, monomials
from .forms import DiscreteField, _edge_quad, _volume_quad, bilinear_degree, edge_moments
from .mesh import DARCY, STOKES, StaggeredMesh
from .quadrature import segment_rule


class NormKind(str, Enum):
    L2 = "L2"
    H = "h"
    Z_S = "Z_S"
    Z_D = "Z_D"
    X_S = "X_S'"
    P = "P"


class NormError(ValueError):
    pass


# -- interpolation -----------------------------------------------------------------

def _as_components(vals, ncomp, shape):
    vals = np.asarray(vals, dtype=float)
    return np.broadcast_to(vals, vals.shape[:vals.ndim - len(shape)] + shape).reshape((ncomp,) + shape)


def interpolate_Ih(f, dofmap: DofMap, ncomp=1) -> DiscreteField:
    """Moment interpolant into U: primal-edge moments and P_{k-1} interior moments."""
    if dofmap.kind != "U":
        raise ValueError("I_h maps into a U space")
    mesh, k = dofmap.mesh, dofmap.k
    coeffs = np.zeros((ncomp, dofmap.ndof))
    edges = np.arange(mesh.n_fu)
    idx = dofmap.edge_dofs(edges).ravel()
    for c in range(ncomp):
        fc = (lambda x, y, c=c: _as_components(f(x, y), ncomp, np.shape(x))[c])
        coeffs[c, idx] = edge_moments(dofmap, edges, fc).ravel()
    tri = np.arange(mesh.n_tris)
    xi, wj = _volume_quad(mesh, bilinear_degree(k))
    x = mesh.to_physical(tri, xi)
    fv = _as_components(f(x[..., 0], x[..., 1]), ncomp, x.shape[:2])
    psi_low, _ = modal(xi, k - 1)
    mom = np.einsum("nq,cnq,qj->cnj", wj, fv, psi_low) / np.sqrt(2.0 * mesh.tri_area)[None, :, None]
    nloc_edge = k + 1
    for c in range(ncomp):
        coeffs[c, dofmap.l2g[:, nloc_edge:]] = mom[c]
    return DiscreteField(dofmap, coeffs)


def interpolate_Jh(q, dofmap: DofMap, ncomp=1) -> DiscreteField:
    """Moment interpolant into V: dual-edge normal moments and [P_{k-1}]^2 interior moments.

    With ncomp = 2, ``q`` returns a (2, 2, ...) tensor interpolated row by row.
    """
    if dofmap.kind != "V":
        raise ValueError("J_h maps into a V space")
    mesh, k = dofmap.mesh, dofmap.k
    coeffs = np.zeros((ncomp, dofmap.ndof))
    rule = segment_rule(bilinear_degree(k) + 2)
    P = mesh.points
    A, B = P[mesh.fp_edges[:, 0]], P[mesh.fp_edges[:, 1]]
    x = A[:, None, :] + rule.points[None, :, None] * (B - A)[:, None, :]
    h = mesh.h_fp
    L = legendre_on_edge(rule.points, k, h[:, None])
    qv = _as_components(q(x[..., 0], x[..., 1]), ncomp, (2,) + x.shape[:2])
    qn = np.einsum("cdnq,nd->cnq", qv, mesh.fp_normal)
    edge_mom = np.einsum("q,cnq,nqi->cni", rule.weights, qn, L) * h[None, :, None]
    idx = dofmap.edge_dofs(np.arange(mesh.n_fp)).ravel()
    coeffs[:, idx] = edge_mom.reshape(ncomp, -1)

    tri = np.arange(mesh.n_tris)
    xi, wj = _volume_quad(mesh, bilinear_degree(k))
    xv = mesh.to_physical(tri, xi)
    qv = _as_components(q(xv[..., 0], xv[..., 1]), ncomp, (2,) + xv.shape[:2])
    psi_low, _ = modal(xi, k - 1)
    mom = np.einsum("nq,cdnq,qj->cndj", wj, qv, psi_low) / np.sqrt(2.0 * mesh.tri_area)[None, :, None, None]
    mom = mom.reshape(ncomp, mesh.n_tris, -1)
    for c in range(ncomp):
        coeffs[c, dofmap.l2g[:, 2 * (k + 1):]] = mom[c]
    return DiscreteField(dofmap, coeffs)


@dataclass
class LagrangeField:
    """Conforming P_k nodal field on the triangles of a mesh (values stored per triangle)."""

    mesh: StaggeredMesh = field(repr=False)
    k: int
    nodal: np.ndarray  # (nt, n_poly(k))

    kind = "L"
    ncomp = 1

    @staticmethod
    def lattice(k):
        return np.array([(i / k, j / k) for j in range(k + 1) for i in range(k + 1 - j)])

    def _coeffs(self):
        V, _ = monomials(self.lattice(self.k), self.k)
        return np.linalg.solve(V, self.nodal.T).T  # monomial coefficients per triangle

    def values_ref(self, tri_ids, xi):
        v, _ = monomials(np.asarray(xi, dtype=float), self.k)
        c = self._coeffs()[tri_ids]
        return np.einsum("qm,nm->nq" if v.ndim == 2 else "nqm,nm->nq", v, c)[None]

    def grads_ref(self, tri_ids, xi):
        _, g = monomials(np.asarray(xi, dtype=float), self.k)
        c = self._coeffs()[tri_ids]
        gref = np.einsum("qmd,nm->nqd" if g.ndim == 3 else "nqmd,nm->nqd", g, c)
        return np.einsum("nji,nqj->nqi", self.mesh.Binv[tri_ids], gref)[None]

    def values_at(self, tri_ids, x):
        return self.values_ref(tri_ids, self.mesh.to_reference(tri_ids, x))


def interpolate_pih(q, mesh: StaggeredMesh, k) -> LagrangeField:
    """Standard conforming P_k nodal interpolant on the triangles of ``mesh``."""
    lat = LagrangeField.lattice(k)
    tri = np.arange(mesh.n_tris)
    x = mesh.to_physical(tri, lat)
    vals = np.asarray(q(x[..., 0], x[..., 1]), dtype=float) * np.ones(x.shape[:2])
    return LagrangeField(mesh, k, vals)


# -- norms -------------------------------------------------------------------------

def _kind_of(f):
    return getattr(f, "kind", None)


def _values(f, tri, xi, exact, x, ncomp):
    """Values of (exact - f) at reference points: (ncomp, n, q) or (ncomp, n, q, 2)."""
    vec = _kind_of(f) == "V"
    shape = x.shape[:2]
    out = None
    if f is not None:
        out = -f.values_ref(tri, xi)
    if exact is not None:
        ex = np.asarray(exact(x[..., 0], x[..., 1]), dtype=float)
        if vec:
            ex = np.moveaxis(_as_components(ex, ncomp, (2,) + shape), 1, -1)
        else:
            ex = _as_components(ex, ncomp, shape)
        out = ex if out is None else out + ex
    return out


def _grads(f, tri, xi, exact_grad, x, ncomp):
    shape = x.shape[:2]
    out = None
    if f is not None:
        out = -f.grads_ref(tri, xi)
    if exact_grad is not None:
        ex = np.asarray(exact_grad(x[..., 0], x[..., 1]), dtype=float)
        ex = np.moveaxis(_as_components(ex, ncomp, (2,) + shape), 1, -1)
        out = ex if out is None else out + ex
    return out


def _check_kind(f, kind, mesh):
    space = _kind_of(f)
    sub = mesh.subdomain
    ok = {
        NormKind.L2: True,
        NormKind.H: space in ("U", "L", None) and sub == STOKES,
        NormKind.Z_S: space in ("U", "L", None) and sub == STOKES,
        NormKind.Z_D: space in ("U", "L", None) and sub == DARCY,
        NormKind.X_S: space in ("V", None) and sub == STOKES,
        NormKind.P: space in ("P", None) and sub == STOKES,
    }[kind]
    if not ok:
        raise NormError(f"norm {kind.value} is not defined for a {space} field on the {sub} mesh")


def compute_norm(f, kind, exact=None, exact_grad=None, mesh=None, ncomp=None):
    """Norm of ``exact - f`` (either may be None) in one of the discrete norms.

    ``exact`` and ``exact_grad`` are callables of (x, y); gradients are indexed
    [component, direction].  Returns the norm itself (for Z_D the 2/3 power of
    the 3/2-power sum).
    """
    kind = NormKind(kind)
    if f is None and mesh is None:
        raise ValueError("need a field or a mesh")
    mesh = f.mesh if f is not None else mesh
    ncomp = (f.ncomp if f is not None else 1) if ncomp is None else ncomp
    _check_kind(f, kind, mesh)
    k = f.k if f is not None else 1
    tri = np.arange(mesh.n_tris)
    xi, wj = _volume_quad(mesh, bilinear_degree(k))
    x = mesh.to_physical(tri, xi)

    if kind in (NormKind.L2, NormKind.X_S, NormKind.P):
        d = _values(f, tri, xi, exact, x, ncomp)
        sq = d ** 2 if d.ndim == 3 else np.sum(d ** 2, axis=-1)
        total = float(np.sum(wj * sq.sum(axis=0)))
        if kind != NormKind.L2:
            e = np.arange(mesh.n_fp)
            xe, we = _edge_quad(mesh, mesh.fp_edges, k)
            t1 = mesh.fp_tris[:, 0]
            de = _values(f, t1, mesh.to_reference(t1, xe), exact, xe, ncomp)
            if kind == NormKind.X_S:
                de = np.einsum("cnqd,nd->cnq", de, mesh.fp_normal)
            total += float(np.sum(mesh.h_fp[e][:, None] * we * (de ** 2).sum(axis=0)))
        return float(np.sqrt(total))

    power = 1.5 if kind == NormKind.Z_D else 2.0
    g = _grads(f, tri, xi, exact_grad, x, ncomp)
    gn = np.sqrt(np.sum(g ** 2, axis=-1))  # (ncomp, n, q)
    total = float(np.sum(wj * (gn ** power).sum(axis=0)))
    if f is not None:
        xe, we = _edge_quad(mesh, mesh.fp_edges, k)
        t1, t2 = mesh.fp_tris[:, 0], mesh.fp_tris[:, 1]
        jump = f.values_ref(t1, mesh.to_reference(t1, xe)) - f.values_ref(t2, mesh.to_reference(t2, xe))
        hw = mesh.h_fp ** (1.0 - power)
        total += float(np.sum(hw[:, None] * we * (np.abs(jump) ** power).sum(axis=0)))
    return float(total ** (1.0 / power))


# -- error records -------------------------------------------------------------------

ERROR_COLUMNS = ("e_sigma_L2", "e_uS_L2", "e_pS_L2", "e_uD_L2", "e_pD_L2",
                 "e_uS_h", "e_pD_ZD", "e_super_uS", "e_super_pD")


def compute_errors(fields: dict, case, spaces=None) -> dict:
    """All error quantities of a solved manufactured case."""
    if not case.has_exact:
        raise ValueError(f"case {case.name} has no exact solution")
    uS, pD = fields["uS"], fields["pD"]
    IuS = interpolate_Ih(case.u_S, uS.dofmap, ncomp=2)
    IpD = interpolate_Ih(case.p_D, pD.dofmap, ncomp=1)
    return {
        "e_sigma_L2": compute_norm(fields["sigma"], "L2", exact=case.sigma),
        "e_uS_L2": compute_norm(uS, "L2", exact=case.u_S),
        "e_pS_L2": compute_norm(fields["pS"], "L2", exact=case.p_S),
        "e_uD_L2": compute_norm(fields["uD"], "L2", exact=case.u_D),
        "e_pD_L2": compute_norm(pD, "L2", exact=case.p_D),
        "e_uS_h": compute_norm(uS, "h", exact_grad=case.grad_u_S),
        "e_pD_ZD": compute_norm(pD, "Z_D", exact_grad=case.grad_p_D),
        "e_super_uS": compute_norm(IuS - uS, "h"),
        "e_super_pD": compute_norm(IpD - pD, "Z_D"),
    }


# -- Gram matrices -------------------------------------------------------------------

def _edge_pair_values(D: DofMap, normal=False):
    """Basis values on both sides of every dual edge: (ne, q, 2*nloc), l2g (ne, 2*nloc), weights."""
    mesh = D.mesh
    xe, we = _edge_quad(mesh, mesh.fp_edges, D.k)
    t1, t2 = mesh.fp_tris[:, 0], mesh.fp_tris[:, 1]
    v1 = D.values_ref(t1, mesh.to_reference(t1, xe))
    v2 = D.values_ref(t2, mesh.to_reference(t2, xe))
    if normal:
        v1 = np.einsum("nqld,nd->nql", v1, mesh.fp_normal)
        v2 = np.einsum("nqld,nd->nql", v2, mesh.fp_normal)
    return v1, v2, D.l2g[t1], D.l2g[t2], we


def gram_matrix(D: DofMap, kind):
    """Gram matrix of one scalar (U, P) or vector (V) space in the given norm."""
    from .forms import _scatter, mass_matrix

    kind = NormKind(kind)
    mesh = D.mesh
    shape = (D.ndof, D.ndof)
    if kind == NormKind.L2:
        return mass_matrix(D)
    if kind in (NormKind.Z_S, NormKind.H):
        if D.kind != "U":
            raise NormError("Z_S Gram matrix needs a U space")
        tri = np.arange(mesh.n_tris)
        xi, wj = _volume_quad(mesh, bilinear_degree(D.k))
        g = D.grads_ref(tri, xi)
        G = _scatter(D.l2g, D.l2g, np.einsum("nq,nqid,nqjd->nij", wj, g, g), shape)
        v1, v2, l1, l2, we = _edge_pair_values(D)
        jump = np.concatenate([v1, -v2], axis=2)
        l12 = np.hstack([l1, l2])
        w = we / mesh.h_fp[:, None]
        return (G + _scatter(l12, l12, np.einsum("nq,nqi,nqj->nij", w, jump, jump), shape)).tocsr()
    if kind in (NormKind.X_S, NormKind.P):
        if (kind == NormKind.X_S) != (D.kind == "V"):
            raise NormError(f"{kind.value} Gram matrix does not match a {D.kind} space")
        v1, _, l1, _, we = _edge_pair_values(D, normal=D.kind == "V")
        w = we * mesh.h_fp[:, None]
        return (mass_matrix(D) + _scatter(l1, l1, np.einsum("nq,nqi,nqj->nij", w, v1, v1), shape)).tocsr()
    raise NormError(f"no Gram matrix for the non-Hilbertian norm {kind.value}")
