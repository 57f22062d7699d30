"""Assembly of the staggered DG bilinear forms, interface couplings, the
Picard-linearized Darcy-Forchheimer block and right-hand sides.

Unknown layout: [sigma_S (2 rows in V_S) | u_S (2 comps in U_S) | p_S (P) |
u_D (V_D) | p_D (U_D)].  Vector/tensor unknowns are stored component-major.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .femspace import DofMap, build_dofmap
from .mesh import GAMMA_D, GAMMA_S, INTERFACE, InterfaceGlue, StaggeredMesh
from .quadrature import segment_rule, triangle_rule

FIELDS = ("sigma", "uS", "pS", "uD", "pD")


class AssemblyError(RuntimeError):
    """A form produced an inconsistent matrix (e.g. an uncovered DOF)."""


def bilinear_degree(k):
    return 2 * k + 4


def nonlinear_degree(k):
    return 3 * k + 4


def edge_degree(k):
    return 2 * k + 3


def identity_K(x, y):
    K = np.zeros(np.shape(x) + (2, 2))
    K[..., 0, 0] = 1.0
    K[..., 1, 1] = 1.0
    return K


@dataclass(frozen=True)
class PhysicalParams:
    mu: float = 1.0
    rho: float = 1.0
    beta: float = 1.0
    nu: float = 1.0
    G: float = 1.0
    K: object = identity_K
    K_inv: object = None

    def __post_init__(self):
        for name in ("mu", "rho", "nu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.G < 0:
            raise ValueError("G must be non-negative")

    def kinv(self, x, y):
        if self.K_inv is not None:
            return self.K_inv(x, y)
        K = self.K(x, y)
        det = K[..., 0, 0] * K[..., 1, 1] - K[..., 0, 1] * K[..., 1, 0]
        if np.any(np.abs(det) < 1e-300):
            raise np.linalg.LinAlgError("permeability not invertible at a quadrature point")
        return np.linalg.inv(K)

    def check_permeability(self, points):
        K = self.K(points[:, 0], points[:, 1])
        if np.max(np.abs(K - np.swapaxes(K, -1, -2))) > 1e-12 * max(1.0, np.abs(K).max()):
            raise ValueError("permeability not symmetric")
        lam = np.linalg.eigvalsh(K)
        if lam.min() <= 0:
            raise ValueError("permeability not positive definite")
        return float(lam.min())


def apply_A(u, params: PhysicalParams, K_at_point=None):
    """Pointwise Forchheimer map (mu/rho) K^-1 u + (beta/rho)|u| u for u (..., 2)."""
    u = np.asarray(u, dtype=float)
    Kinv = np.eye(2) if K_at_point is None else np.linalg.inv(np.asarray(K_at_point, dtype=float))
    lin = np.einsum("...ij,...j->...i", Kinv * np.ones(u.shape[:-1] + (1, 1)), u)
    speed = np.sqrt(np.sum(u * u, axis=-1))[..., None]
    return params.mu / params.rho * lin + params.beta / params.rho * speed * u


# -- discrete fields ---------------------------------------------------------

@dataclass
class DiscreteField:
    """Coefficients of an ncomp-component field in one space.

    ``coeffs`` has shape (ncomp, ndof).  V fields evaluate to vectors per
    component, so a tensor sigma is a 2-component V field.
    """

    dofmap: DofMap = field(repr=False)
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if self.coeffs.shape[1] != self.dofmap.ndof:
            raise ValueError("coefficient length does not match the DofMap")

    @property
    def kind(self):
        return self.dofmap.kind

    @property
    def k(self):
        return self.dofmap.k

    @property
    def ncomp(self):
        return self.coeffs.shape[0]

    @property
    def mesh(self):
        return self.dofmap.mesh

    def local(self, tri_ids):
        return self.coeffs[:, self.dofmap.l2g[tri_ids]]  # (ncomp, n, nloc)

    def values_ref(self, tri_ids, xi):
        """(ncomp, n, q) for scalar spaces, (ncomp, n, q, 2) for V."""
        phi = self.dofmap.values_ref(tri_ids, xi)
        c = self.local(tri_ids)
        if phi.ndim == 4:
            return np.einsum("cnl,nqld->cnqd", c, phi)
        return np.einsum("cnl,nql->cnq", c, phi)

    def grads_ref(self, tri_ids, xi):
        g = self.dofmap.grads_ref(tri_ids, xi)
        c = self.local(tri_ids)
        if g.ndim == 5:
            return np.einsum("cnl,nqlde->cnqde", c, g)
        return np.einsum("cnl,nqld->cnqd", c, g)

    def values_at(self, tri_ids, x):
        phi = self.dofmap.values_at(tri_ids, x)
        c = self.local(tri_ids)
        if phi.ndim == 4:
            return np.einsum("cnl,nqld->cnqd", c, phi)
        return np.einsum("cnl,nql->cnq", c, phi)

    def scaled(self, a):
        return DiscreteField(self.dofmap, a * self.coeffs)

    def __sub__(self, other):
        return DiscreteField(self.dofmap, self.coeffs - other.coeffs)


# -- low-level helpers ---------------------------------------------------------

def _scatter(rows, cols, vals, shape):
    """Sum local matrices vals (n, a, b) into a CSR matrix."""
    n, a, b = vals.shape
    R = np.broadcast_to(rows[:, :, None], (n, a, b))
    C = np.broadcast_to(cols[:, None, :], (n, a, b))
    return sp.csr_matrix((vals.ravel(), (R.ravel(), C.ravel())), shape=shape)


def _scatter_vec(rows, vals, n):
    out = np.zeros(n)
    np.add.at(out, rows.ravel(), vals.ravel())
    return out


def _edge_quad(mesh, edges, k):
    rule = segment_rule(edge_degree(k))
    P = mesh.points
    A, B = P[edges[:, 0]], P[edges[:, 1]]
    x = A[:, None, :] + rule.points[None, :, None] * (B - A)[:, None, :]
    h = np.hypot(*(B - A).T)
    return x, rule.weights[None, :] * h[:, None]


def _volume_quad(mesh, degree):
    rule = triangle_rule(degree)
    jac = 2.0 * mesh.tri_area
    return rule.points, rule.weights[None, :] * jac[:, None]


def _seg_quad(glue, k):
    rule = segment_rule(edge_degree(k))
    a = np.array([s.a for s in glue.segments])
    b = np.array([s.b for s in glue.segments])
    x = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    L = np.array([s.length for s in glue.segments])
    return x, rule.weights[None, :] * L[:, None]


# -- bilinear forms --------------------------------------------------------------

def grad_form(V: DofMap, U: DofMap, flip_jump=False):
    """G[u_i, v_j] = sum_Fp <v_j.n, [u_i]> - sum_tau (v_j, grad u_i).

    a_S (one row/component) and a_D share this form.
    """
    mesh = V.mesh
    k = V.k
    xi, wj = _volume_quad(mesh, bilinear_degree(k))
    tri = np.arange(mesh.n_tris)
    vv = V.values_ref(tri, xi)          # (n, q, nV, 2)
    gu = U.grads_ref(tri, xi)           # (n, q, nU, 2)
    vol = -np.einsum("nq,nqid,nqjd->nij", wj, gu, vv)
    G = _scatter(U.l2g, V.l2g, vol, (U.ndof, V.ndof))

    t1, t2 = mesh.fp_tris[:, 0], mesh.fp_tris[:, 1]
    x, we = _edge_quad(mesh, mesh.fp_edges, k)
    vn = np.einsum("nqjd,nd->nqj", V.values_at(t1, x), mesh.fp_normal)
    u1 = U.values_at(t1, x)
    u2 = U.values_at(t2, x)
    s = -1.0 if flip_jump else 1.0
    G = G + _scatter(U.l2g[t1], V.l2g[t1], s * np.einsum("nq,nqi,nqj->nij", we, u1, vn), G.shape)
    G = G - _scatter(U.l2g[t2], V.l2g[t1], s * np.einsum("nq,nqi,nqj->nij", we, u2, vn), G.shape)
    return G.tocsr()


def div_form(U: DofMap, V: DofMap):
    """D[v_j, u_i] = -sum_Fu0 <u_i, [v_j.n]> - sum_boundary <u_i, v_j.n> + sum_tau (u_i, div v_j).

    a_S^* and a_D^* share this form; boundary terms run over every boundary
    primal edge (constrained DOFs there carry Dirichlet data).
    """
    mesh = V.mesh
    k = V.k
    xi, wj = _volume_quad(mesh, bilinear_degree(k))
    tri = np.arange(mesh.n_tris)
    gv = V.grads_ref(tri, xi)           # (n, q, nV, 2, 2)
    div = gv[..., 0, 0] + gv[..., 1, 1]
    uu = U.values_ref(tri, xi)
    vol = np.einsum("nq,nqj,nqi->nji", wj, div, uu)
    D = _scatter(V.l2g, U.l2g, vol, (V.ndof, U.ndof))

    t1, t2 = mesh.fu_tris[:, 0], mesh.fu_tris[:, 1]
    x, we = _edge_quad(mesh, mesh.fu_edges, k)
    u1 = U.values_at(t1, x)
    v1n = np.einsum("nqjd,nd->nqj", V.values_at(t1, x), mesh.fu_normal)
    D = D - _scatter(V.l2g[t1], U.l2g[t1], np.einsum("nq,nqj,nqi->nji", we, v1n, u1), D.shape)
    inner = np.flatnonzero(t2 >= 0)
    if len(inner):
        xi_, we_ = x[inner], we[inner]
        v2n = np.einsum("nqjd,nd->nqj", V.values_at(t2[inner], xi_), mesh.fu_normal[inner])
        D = D + _scatter(V.l2g[t2[inner]], U.l2g[t1[inner]],
                         np.einsum("nq,nqj,nqi->nji", we_, v2n, u1[inner]), D.shape)
    return D.tocsr()


def b_form(U: DofMap, P: DofMap):
    """b_S(v, q): rows P, cols [U]^2 (component-major)."""
    mesh = U.mesh
    k = U.k
    xi, wj = _volume_quad(mesh, bilinear_degree(k))
    tri = np.arange(mesh.n_tris)
    uu = U.values_ref(tri, xi)
    gq = P.grads_ref(tri, xi)
    t1, t2 = mesh.fu_tris[:, 0], mesh.fu_tris[:, 1]
    x, we = _edge_quad(mesh, mesh.fu_edges, k)
    v1 = U.values_at(t1, x)
    q1 = P.values_at(t1, x)
    inner = np.flatnonzero(t2 >= 0)
    q2 = P.values_at(t2[inner], x[inner])
    blocks = []
    for c in range(2):
        vol = np.einsum("nq,nqj,nqi->nji", wj, gq[..., c], uu)
        M = _scatter(P.l2g, U.l2g, vol, (P.ndof, U.ndof))
        n_c = mesh.fu_normal[:, c]
        M = M - _scatter(P.l2g[t1], U.l2g[t1], np.einsum("nq,n,nqj,nqi->nji", we, n_c, q1, v1), M.shape)
        if len(inner):
            M = M + _scatter(P.l2g[t2[inner]], U.l2g[t1[inner]],
                             np.einsum("nq,n,nqj,nqi->nji", we[inner], n_c[inner], q2, v1[inner]),
                             M.shape)
        blocks.append(M)
    return sp.hstack(blocks).tocsr()


def bstar_form(P: DofMap, U: DofMap):
    """b_S^*(q, v): rows [U]^2 (component-major), cols P."""
    mesh = U.mesh
    k = U.k
    xi, wj = _volume_quad(mesh, bilinear_degree(k))
    tri = np.arange(mesh.n_tris)
    gu = U.grads_ref(tri, xi)
    qq = P.values_ref(tri, xi)
    t1, t2 = mesh.fp_tris[:, 0], mesh.fp_tris[:, 1]
    x, we = _edge_quad(mesh, mesh.fp_edges, k)
    q1 = P.values_at(t1, x)
    v1 = U.values_at(t1, x)
    v2 = U.values_at(t2, x)
    blocks = []
    for c in range(2):
        vol = -np.einsum("nq,nqi,nqj->nij", wj, gu[..., c], qq)
        M = _scatter(U.l2g, P.l2g, vol, (U.ndof, P.ndof))
        n_c = mesh.fp_normal[:, c]
        M = M + _scatter(U.l2g[t1], P.l2g[t1], np.einsum("nq,n,nqi,nqj->nij", we, n_c, v1, q1), M.shape)
        M = M - _scatter(U.l2g[t2], P.l2g[t1], np.einsum("nq,n,nqi,nqj->nij", we, n_c, v2, q1), M.shape)
        blocks.append(M)
    return sp.vstack(blocks).tocsr()


def mass_matrix(D: DofMap, coef=None, degree=None, u_prev=None):
    """Mass matrix of a U, V or P space, optionally weighted.

    For V, ``coef(x, y, speed)`` returns a (n, q, 2, 2) tensor where ``speed``
    is |u_prev| at the quadrature points (zeros if u_prev is None).
    """
    mesh = D.mesh
    degree = bilinear_degree(D.k) if degree is None else degree
    xi, wj = _volume_quad(mesh, degree)
    tri = np.arange(mesh.n_tris)
    phi = D.values_ref(tri, xi)
    if phi.ndim == 4:
        if coef is None:
            vals = np.einsum("nq,nqid,nqjd->nij", wj, phi, phi)
        else:
            x = mesh.to_physical(tri, xi)
            speed = np.zeros(x.shape[:2])
            if u_prev is not None:
                u = u_prev.values_ref(tri, xi)[0]
                speed = np.sqrt(np.sum(u * u, axis=-1))
            Cq = coef(x[..., 0], x[..., 1], speed)
            Cphi = np.einsum("nqde,nqje->nqjd", Cq, phi)
            vals = np.einsum("nqid,nqjd->nij", wj[:, :, None, None] * phi, Cphi)
    else:
        if coef is not None:
            x = mesh.to_physical(tri, xi)
            wj = wj * coef(x[..., 0], x[..., 1])
        vals = np.einsum("nq,nqi,nqj->nij", wj, phi, phi)
    return _scatter(D.l2g, D.l2g, vals, (D.ndof, D.ndof))


def assemble_picard_darcy(u_prev, params: PhysicalParams, VD: DofMap = None):
    """M_A(v, w) = int [(mu/rho) K^-1 v + (beta/rho)|u_prev| v] . w.

    ``u_prev`` is a DiscreteField on V_D or None (treated as zero).
    """
    if VD is None:
        VD = u_prev.dofmap
    if u_prev is not None and not np.all(np.isfinite(u_prev.coeffs)):
        raise ValueError("previous Darcy velocity is not finite")

    def coef(x, y, speed):
        Kinv = params.kinv(x, y)
        C = params.mu / params.rho * Kinv
        C = C + (params.beta / params.rho) * speed[..., None, None] * np.eye(2)
        return C

    return mass_matrix(VD, coef=coef, degree=nonlinear_degree(VD.k), u_prev=u_prev)


# -- interface couplings ------------------------------------------------------------

def interface_blocks(US: DofMap, UD: DofMap, glue: InterfaceGlue, G):
    """<p_D, v_S.n_S>, G <u_S.t, v_S.t> and -<u_S.n_S, q_D> on the glue sub-segments."""
    k = US.k
    x, w = _seg_quad(glue, k)
    ts = np.array([s.stokes_tri for s in glue.segments])
    td = np.array([s.darcy_tri for s in glue.segments])
    vs = US.values_at(ts, x)
    qd = UD.values_at(td, x)
    nS, t = glue.n_s, glue.t
    nU = US.ndof
    C_p = []
    for c in range(2):
        C_p.append(_scatter(US.l2g[ts], UD.l2g[td], nS[c] * np.einsum("nq,nqi,nqj->nij", w, vs, qd),
                            (nU, UD.ndof)))
    C_pD_vS = sp.vstack(C_p).tocsr()
    C_q = []
    for c in range(2):
        C_q.append(_scatter(UD.l2g[td], US.l2g[ts], -nS[c] * np.einsum("nq,nqi,nqj->nij", w, qd, vs),
                            (UD.ndof, nU)))
    C_uS_qD = sp.hstack(C_q).tocsr()
    mass = np.einsum("nq,nqi,nqj->nij", w, vs, vs)
    rows = []
    for c in range(2):
        rows.append([_scatter(US.l2g[ts], US.l2g[ts], G * t[c] * t[d] * mass, (nU, nU)) for d in range(2)])
    C_BJS = sp.bmat(rows).tocsr()
    return C_pD_vS, C_uS_qD, C_BJS


# -- coupled system ---------------------------------------------------------------------

@dataclass
class Spaces:
    """The five DofMaps of the coupled problem on a Stokes/Darcy mesh pair."""

    VS: DofMap
    US: DofMap
    P: DofMap
    VD: DofMap
    UD: DofMap

    @property
    def sizes(self):
        return {"sigma": 2 * self.VS.ndof, "uS": 2 * self.US.ndof, "pS": self.P.ndof,
                "uD": self.VD.ndof, "pD": self.UD.ndof}

    def offsets(self):
        off, out = 0, {}
        for name in FIELDS:
            out[name] = off
            off += self.sizes[name]
        return out

    @property
    def ntotal(self):
        return sum(self.sizes.values())

    def constrained_mask(self):
        mask = np.zeros(self.ntotal, dtype=bool)
        off = self.offsets()
        nU = self.US.ndof
        mask[off["uS"]:off["uS"] + nU] = self.US.constrained
        mask[off["uS"] + nU:off["uS"] + 2 * nU] = self.US.constrained
        mask[off["pD"]:off["pD"] + self.UD.ndof] = self.UD.constrained
        return mask

    def split(self, x):
        off = self.offsets()
        out = {}
        for name in FIELDS:
            out[name] = x[off[name]:off[name] + self.sizes[name]]
        return out

    def fields(self, x):
        parts = self.split(x)
        return {
            "sigma": DiscreteField(self.VS, parts["sigma"].reshape(2, -1)),
            "uS": DiscreteField(self.US, parts["uS"].reshape(2, -1)),
            "pS": DiscreteField(self.P, parts["pS"][None]),
            "uD": DiscreteField(self.VD, parts["uD"][None]),
            "pD": DiscreteField(self.UD, parts["pD"][None]),
        }


def build_spaces(meshS: StaggeredMesh, meshD: StaggeredMesh, k=1, darcy_dirichlet_filter=None):
    """DofMaps with u_S fixed on Gamma_S and p_D fixed on (part of) Gamma_D."""
    return Spaces(
        VS=build_dofmap(meshS, "V", k),
        US=build_dofmap(meshS, "U", k, strong_zero_tags=(GAMMA_S,)),
        P=build_dofmap(meshS, "P", k),
        VD=build_dofmap(meshD, "V", k),
        UD=build_dofmap(meshD, "U", k, strong_zero_tags=(GAMMA_D,),
                        strong_edge_filter=darcy_dirichlet_filter),
    )


@dataclass
class BlockSystem:
    """Named sparse blocks of the coupled operator (M_A excluded)."""

    spaces: Spaces
    params: PhysicalParams
    blocks: dict

    def matrix(self, M_A):
        b = self.blocks
        nu = self.params.nu
        rows = [
            [b["A_S"] / nu, -b["aS*"], None, None, None],
            [b["aS"], b["C_BJS"], b["bS*"], None, b["C_pD_vS"]],
            [None, b["bS"], None, None, None],
            [None, None, None, M_A, -b["aD*"]],
            [None, b["C_uS_qD"], None, b["aD"], None],
        ]
        sizes = self.spaces.sizes
        for i, name in enumerate(FIELDS):
            for j, other in enumerate(FIELDS):
                if rows[i][j] is None and i == j:
                    rows[i][j] = sp.csr_matrix((sizes[name], sizes[other]))
        return sp.bmat(rows, format="csr")


def _blockdiag2(M):
    return sp.block_diag([M, M], format="csr")


def assemble_linear_blocks(meshS, meshD, spaces: Spaces, params: PhysicalParams,
                           glue: InterfaceGlue, flip_jump=False) -> BlockSystem:
    """Assemble every parameter-independent block of the coupled operator."""
    S = spaces
    if S.VS.mesh is not meshS or S.VD.mesh is not meshD:
        raise ValueError("DofMaps do not belong to the given meshes")
    G_S = grad_form(S.VS, S.US, flip_jump=flip_jump)
    D_S = div_form(S.US, S.VS)
    C_pD_vS, C_uS_qD, C_BJS = interface_blocks(S.US, S.UD, glue, params.G)
    blocks = {
        "A_S": _blockdiag2(mass_matrix(S.VS)),
        "aS": _blockdiag2(G_S),
        "aS*": _blockdiag2(D_S),
        "bS": b_form(S.US, S.P),
        "bS*": bstar_form(S.P, S.US),
        "aD": grad_form(S.VD, S.UD, flip_jump=flip_jump),
        "aD*": div_form(S.UD, S.VD),
        "C_pD_vS": C_pD_vS,
        "C_uS_qD": C_uS_qD,
        "C_BJS": C_BJS,
    }
    system = BlockSystem(S, params, blocks)
    _check_coverage(system)
    return system


def _check_coverage(system):
    M = system.matrix(mass_matrix(system.spaces.VD))
    M = abs(M).tocsr()
    empty_rows = np.flatnonzero(np.asarray(M.sum(axis=1)).ravel() == 0.0)
    empty_cols = np.flatnonzero(np.asarray(M.sum(axis=0)).ravel() == 0.0)
    if len(empty_rows) or len(empty_cols):
        raise AssemblyError(f"{len(empty_rows)} empty rows / {len(empty_cols)} empty columns "
                            "(DOF without quadrature coverage)")


# -- right-hand side ----------------------------------------------------------------------

def edge_moments(D: DofMap, edges, func):
    """Moments <func, L_i>_e of a scalar callable on the given primal edges."""
    from .femspace import legendre_on_edge

    mesh = D.mesh
    rule = segment_rule(edge_degree(D.k) + 4)
    P = mesh.points
    A, B = P[mesh.fu_edges[edges, 0]], P[mesh.fu_edges[edges, 1]]
    x = A[:, None, :] + rule.points[None, :, None] * (B - A)[:, None, :]
    h = mesh.h_fu[edges]
    L = legendre_on_edge(rule.points, D.k, h[:, None])
    f = func(x[..., 0], x[..., 1])
    return np.einsum("q,nq,nqi->ni", rule.weights, f, L) * h[:, None]


def dirichlet_values(spaces: Spaces, case):
    """Full unknown vector with constrained DOFs set from the case's boundary data."""
    x = np.zeros(spaces.ntotal)
    off = spaces.offsets()
    US, UD = spaces.US, spaces.UD
    dofs = np.flatnonzero(US.constrained)
    if len(dofs):
        edges = np.unique(dofs // (US.k + 1))
        idx = US.edge_dofs(edges).ravel()
        for c in range(2):
            vals = edge_moments(US, edges, lambda X, Y, c=c: case.stokes_dirichlet(X, Y)[c])
            x[off["uS"] + c * US.ndof + idx] = vals.ravel()
    dofs = np.flatnonzero(UD.constrained)
    if len(dofs):
        edges = np.unique(dofs // (UD.k + 1))
        idx = UD.edge_dofs(edges).ravel()
        x[off["pD"] + idx] = edge_moments(UD, edges, case.darcy_dirichlet).ravel()
    return x


def _load(D: DofMap, func, vector=False):
    mesh = D.mesh
    xi, wj = _volume_quad(mesh, bilinear_degree(D.k))
    tri = np.arange(mesh.n_tris)
    x = mesh.to_physical(tri, xi)
    phi = D.values_ref(tri, xi)
    f = np.asarray(func(x[..., 0], x[..., 1]))
    if vector:
        vals = np.einsum("nq,dnq,nqid->ni", wj, f, phi)
    else:
        vals = np.einsum("nq,nq,nqi->ni", wj, f * np.ones(x.shape[:2]), phi)
    return _scatter_vec(D.l2g, vals, D.ndof)


def assemble_rhs(case, spaces: Spaces, glue: InterfaceGlue):
    """Loads f_S, f_D, g_D and the interface data g1, g2 (Dirichlet lifts excluded)."""
    off = spaces.offsets()
    b = np.zeros(spaces.ntotal)
    US = spaces.US
    nU = US.ndof
    for c in range(2):
        b[off["uS"] + c * nU:off["uS"] + (c + 1) * nU] += _load(US, lambda X, Y, c=c: case.f_S(X, Y)[c])
    b[off["uD"]:off["uD"] + spaces.VD.ndof] += _load(spaces.VD, case.g_D, vector=True)
    b[off["pD"]:off["pD"] + spaces.UD.ndof] += _load(spaces.UD, case.f_D)

    if case.g1 is not None or case.g2 is not None:
        meshS = US.mesh
        edges = meshS.fu_with_tag(INTERFACE)
        x, we = _edge_quad(meshS, meshS.fu_edges[edges], US.k + 2)
        t1 = meshS.fu_tris[edges, 0]
        v = US.values_at(t1, x)
        g1 = case.g1(x[..., 0], x[..., 1]) if case.g1 is not None else np.zeros(x.shape[:2])
        g2 = case.g2(x[..., 0], x[..., 1]) if case.g2 is not None else np.zeros(x.shape[:2])
        nS, t = glue.n_s, glue.t
        for c in range(2):
            flux = g1 * nS[c] + g2 * t[c]
            vals = -np.einsum("nq,nq,nqi->ni", we, flux, v)
            b[off["uS"] + c * nU:off["uS"] + (c + 1) * nU] += _scatter_vec(US.l2g[t1], vals, nU)
    return b
