"""Numerical checks: rate fitting, inf-sup estimates, adjoint and orthogonality
identities, and monotonicity/continuity of the Forchheimer operator."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .fields import gram_matrix, interpolate_Jh
from .forms import (BlockSystem, PhysicalParams, _scatter_vec, _volume_quad, apply_A,
                    bilinear_degree, grad_form)
from .femspace import build_dofmap
from .mesh import GAMMA_S, STOKES, MeshError, PrimalMesh, build_staggered, generate_primal


# -- rates ---------------------------------------------------------------------------

@dataclass
class RateFit:
    h: np.ndarray
    errors: np.ndarray
    slope: float
    ratios: np.ndarray
    last_ratio: float
    excluded: list = field(default_factory=list)

    def within(self, lo, hi):
        return bool(np.isfinite(self.slope) and lo <= self.slope <= hi)


def fit_rate(points) -> RateFit:
    """Least-squares slope of log(error) against log(h).

    Points with a nonpositive error are dropped and listed in ``excluded``.
    ``ratios`` are per-step orders log(e_i/e_{i+1}) / log(h_i/h_{i+1}).
    """
    pts = [(float(h), float(e)) for h, e in points]
    excluded = [p for p in pts if not p[1] > 0.0]
    pts = [p for p in pts if p[1] > 0.0]
    if len(pts) < 3:
        raise ValueError("a rate fit needs at least 3 levels with positive error")
    h = np.array([p[0] for p in pts])
    e = np.array([p[1] for p in pts])
    if np.any(np.diff(h) >= 0):
        raise ValueError("h must be strictly decreasing")
    lh, le = np.log(h), np.log(e)
    slope = float(np.polyfit(lh, le, 1)[0])
    ratios = np.diff(le) / np.diff(lh)
    return RateFit(h, e, slope, ratios, float(ratios[-1]), excluded)


# -- inf-sup -------------------------------------------------------------------------

@dataclass
class InfSupEstimate:
    form: str
    level: int
    constant: float
    n_rows: int
    n_cols: int


def _stokes_mesh(level, kind="triangular"):
    if isinstance(level, PrimalMesh):
        primal = level
        primal.validate()
    else:
        primal = generate_primal(kind, level, level, subdomain=STOKES, interface_side="top")
    return build_staggered(primal)


def _spd(G, name):
    G = np.asarray(G.todense()) if sp.issparse(G) else np.asarray(G)
    if not np.allclose(G, G.T, atol=1e-12 * max(1.0, np.abs(G).max())):
        raise ArithmeticError(f"{name} Gram matrix is not symmetric")
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"{name} Gram matrix is not positive definite") from exc
    return G


def estimate_infsup(form, level=4, k=1, kind="triangular") -> InfSupEstimate:
    """Smallest generalized singular value of b_S (vs ‖·‖_h, L²) or a_S (vs X_S', ‖·‖_h).

    ``level`` is the primal grid size nx of the unit square or a PrimalMesh.
    Velocities vanish on the outer Stokes boundary; the interface stays free.
    """
    from .forms import b_form

    mesh = _stokes_mesh(level, kind)
    if np.any(mesh.tri_area <= 0):
        raise MeshError("degenerate triangle")
    U = build_dofmap(mesh, "U", k, strong_zero_tags=(GAMMA_S,))
    free = U.free
    GU = gram_matrix(U, "Z_S")[free][:, free]
    Gh = _spd(sp.block_diag([GU, GU]), "h-norm")
    n_free = len(free)
    if form == "b_S":
        P = build_dofmap(mesh, "P", k)
        B = b_form(U, P)
        cols = np.concatenate([free, U.ndof + free])
        B = np.asarray(B[:, cols].todense())
        Gq = _spd(gram_matrix(P, "L2"), "L2")
        S = B @ np.linalg.solve(Gh, B.T)
        lam = sla.eigh(0.5 * (S + S.T), Gq, eigvals_only=True)
    elif form == "a_S":
        V = build_dofmap(mesh, "V", k)
        Gx = gram_matrix(V, "X_S'")
        Gt = _spd(sp.block_diag([Gx, Gx]), "X_S'")
        Gf = grad_form(V, U)
        M = sp.block_diag([Gf, Gf]).tocsr()
        rows = np.concatenate([free, U.ndof + free])
        M = np.asarray(M[rows].todense())
        S = M @ np.linalg.solve(Gt, M.T)
        lam = sla.eigh(0.5 * (S + S.T), Gh, eigvals_only=True)
        B = M
    else:
        raise ValueError(f"unknown form {form!r} (use 'b_S' or 'a_S')")
    c = float(np.sqrt(max(lam.min(), 0.0)))
    lvl = level if isinstance(level, int) else -1
    return InfSupEstimate(form, lvl, c, B.shape[0], 2 * n_free if form == "b_S" else B.shape[1])


# -- algebraic identities -------------------------------------------------------------

def _rel_dev(A, B):
    scale = max(abs(A).max(), abs(B).max(), 1e-300)
    return float(abs(A - B).max() / scale)


def check_adjoints(system: BlockSystem) -> dict:
    """Relative deviations of aS vs aS*^T, bS vs bS*^T, aD vs aD*^T; 'worst' is the max."""
    b = system.blocks
    out = {
        "a_S": _rel_dev(b["aS"], b["aS*"].T),
        "b_S": _rel_dev(b["bS"], b["bS*"].T),
        "a_D": _rel_dev(b["aD"], b["aD*"].T),
        "interface": _rel_dev(b["C_pD_vS"], -b["C_uS_qD"].T),
    }
    out["worst"] = max(out["a_S"], out["b_S"], out["a_D"])
    return out


def grad_functional(u, V_like_U, mesh=None):
    """Vector a(u, phi_j) = sum_Fp <u.n, [phi_j]> - sum_tau (u, grad phi_j) over the U basis.

    ``u`` is a smooth vector callable returning (2, ...); with tensors use one row.
    Quadrature points coincide with those of J_h, so the identity is exact up to rounding.
    """
    U = V_like_U
    mesh = U.mesh
    from .quadrature import segment_rule

    rule = segment_rule(bilinear_degree(U.k) + 2)
    P = mesh.points
    A, Bp = P[mesh.fp_edges[:, 0]], P[mesh.fp_edges[:, 1]]
    x = A[:, None, :] + rule.points[None, :, None] * (Bp - A)[:, None, :]
    we = rule.weights[None, :] * mesh.h_fp[:, None]
    un = np.einsum("dnq,nd->nq", np.asarray(u(x[..., 0], x[..., 1])), mesh.fp_normal)
    t1, t2 = mesh.fp_tris[:, 0], mesh.fp_tris[:, 1]
    v1 = U.values_ref(t1, mesh.to_reference(t1, x))
    v2 = U.values_ref(t2, mesh.to_reference(t2, x))
    out = _scatter_vec(U.l2g[t1], np.einsum("nq,nq,nqi->ni", we, un, v1), U.ndof)
    out -= _scatter_vec(U.l2g[t2], np.einsum("nq,nq,nqi->ni", we, un, v2), U.ndof)
    tri = np.arange(mesh.n_tris)
    xi, wj = _volume_quad(mesh, bilinear_degree(U.k))
    xv = mesh.to_physical(tri, xi)
    uv = np.asarray(u(xv[..., 0], xv[..., 1]))
    g = U.grads_ref(tri, xi)
    out -= _scatter_vec(U.l2g, np.einsum("nq,dnq,nqid->ni", wj, uv, g), U.ndof)
    return out


def orthogonality_defect(u, V, U, Jh=None, samples=20, seed=0):
    """max |a(u - J_h u, q)| / max|a(u, q)| over random q in U.

    ``Jh`` may be a (possibly corrupted) interpolant to test the checker itself.
    """
    Jh = interpolate_Jh(u, V) if Jh is None else Jh
    G = grad_form(V, U)  # rows U, cols V
    cont = grad_functional(u, U)
    r = cont - G @ Jh.coeffs[0]
    Q = np.random.default_rng(seed).standard_normal((samples, U.ndof))
    num = np.abs(Q @ r).max()
    den = max(np.abs(Q @ cont).max(), 1e-300)
    return float(num / den), float(num)


def orthogonality_defect_tensor(sigma, V, U, samples=20, seed=0):
    """Row-wise version for a tensor callable (2, 2, ...): a_S(sigma - J_h sigma, v)."""
    worst_rel, worst_abs = 0.0, 0.0
    for r in range(2):
        row = (lambda x, y, r=r: np.asarray(sigma(x, y))[r])
        rel, ab = orthogonality_defect(row, V, U, samples=samples, seed=seed + r)
        worst_rel, worst_abs = max(worst_rel, rel), max(worst_abs, ab)
    return worst_rel, worst_abs


# -- monotonicity and continuity of A -----------------------------------------------------

@dataclass
class MonotonicityReport:
    min_margin: float
    max_continuity_ratio: float
    samples: int
    skipped: int
    seconds: float

    @property
    def passed(self):
        return self.min_margin >= 1.0 - 1e-12 and self.max_continuity_ratio <= 1.0 + 1e-12


def check_monotonicity(params: PhysicalParams, samples=1000, seed=0, box=((0.0, 1.0), (0.0, 1.0)),
                       scale=10.0) -> MonotonicityReport:
    """Pointwise monotonicity margin and continuity ratio of A on random pairs.

    margin = (A(u+l) - A(v+l)).(u - v) / ((mu/rho) lam_min(K^-1) |u - v|^2)
    ratio  = |A(v) - A(w)| / ((mu/rho)||K^-1|| |v-w| + (beta/rho)|v-w|(|v|+|w|))
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    (x0, x1), (y0, y1) = box
    x = rng.uniform(x0, x1, samples)
    y = rng.uniform(y0, y1, samples)
    Kinv = np.asarray(params.kinv(x, y)).reshape(samples, 2, 2)
    Kpt = np.linalg.inv(Kinv)
    ev = np.linalg.eigvalsh(0.5 * (Kinv + np.swapaxes(Kinv, 1, 2)))
    lam_min, lam_max = ev[:, 0], ev[:, -1]
    u, v, shift = (scale * rng.standard_normal((samples, 2)) for _ in range(3))
    v[: max(1, samples // 100)] = u[: max(1, samples // 100)]  # include coincident pairs

    def A(w):
        return apply_A(w, params, K_at_point=Kpt)

    d = u - v
    dd = np.sum(d * d, axis=1)
    keep = dd > 0
    c = params.mu / params.rho
    num = np.sum((A(u + shift) - A(v + shift)) * d, axis=1)
    margin = num[keep] / (c * lam_min[keep] * dd[keep])
    diff = np.linalg.norm(A(u) - A(v), axis=1)
    nd = np.sqrt(dd)
    bound = c * lam_max * nd + params.beta / params.rho * nd * (np.linalg.norm(u, axis=1)
                                                                + np.linalg.norm(v, axis=1))
    ratio = diff[keep] / bound[keep]
    return MonotonicityReport(float(margin.min()), float(ratio.max()), samples,
                              int(np.count_nonzero(~keep)), time.perf_counter() - t0)


# -- suites ------------------------------------------------------------------------------

ADJOINT_TOL = 1e-12
ORTHO_TOL = 1e-11
FAULT_MIN = 1e-6


def _coupled_system(nx=4, nonmatching=False, flip_jump=False, case_id=1):
    from .cases import example_case
    from .forms import assemble_linear_blocks, build_spaces
    from .mesh import DARCY, build_interface_glue

    case = example_case(case_id)
    pS = generate_primal("triangular", nx, nx, domain=case.stokes_box, subdomain=STOKES,
                         interface_side=case.stokes_interface_side)
    nd = nx + 1 if nonmatching else nx
    pD = generate_primal("triangular", nd, nd, domain=case.darcy_box, subdomain=DARCY,
                         interface_side=case.darcy_interface_side)
    mS, mD = build_staggered(pS), build_staggered(pD)
    glue = build_interface_glue(mS, mD)
    spaces = build_spaces(mS, mD, 1, case.darcy_dirichlet_filter)
    return case, spaces, assemble_linear_blocks(mS, mD, spaces, case.params, glue, flip_jump=flip_jump)


def suite_algebra(nx=4) -> dict:
    """Adjoint and orthogonality identities on matching and nonmatching glue, plus negative controls."""
    checks = {}
    for label, nm in (("matching", False), ("nonmatching", True)):
        case, spaces, system = _coupled_system(nx, nm)
        adj = check_adjoints(system)
        checks[f"adjoint_{label}"] = {"value": adj["worst"], "tol": ADJOINT_TOL,
                                      "passed": adj["worst"] < ADJOINT_TOL}
        od, _ = orthogonality_defect(case.u_D, spaces.VD, spaces.UD)
        os_, _ = orthogonality_defect_tensor(case.sigma, spaces.VS, spaces.US)
        worst = max(od, os_)
        checks[f"orthogonality_{label}"] = {"value": worst, "tol": ORTHO_TOL, "passed": worst < ORTHO_TOL}
    # negative controls: the checkers must flag seeded faults
    _, _, bad = _coupled_system(nx, False, flip_jump=True)
    flipped = check_adjoints(bad)["worst"]
    checks["fault_flipped_jump"] = {"value": flipped, "min": FAULT_MIN, "passed": flipped > FAULT_MIN}
    case, spaces, system = _coupled_system(nx, False)
    blocks = dict(system.blocks)
    pert = blocks["bS"].tolil(copy=True)
    i, j = pert.nonzero()[0][0], pert.nonzero()[1][0]
    pert[i, j] = -pert[i, j]
    blocks["bS"] = pert.tocsr()
    sign = check_adjoints(BlockSystem(system.spaces, system.params, blocks))["worst"]
    checks["fault_sign_flip"] = {"value": sign, "min": FAULT_MIN, "passed": sign > FAULT_MIN}
    Jh = interpolate_Jh(case.u_D, spaces.VD)
    Jh.coeffs[0, spaces.VD.n_edge_dofs:] = 0.0
    corrupt, _ = orthogonality_defect(case.u_D, spaces.VD, spaces.UD, Jh=Jh)
    checks["fault_interpolant"] = {"value": corrupt, "min": FAULT_MIN, "passed": corrupt > FAULT_MIN}
    return checks


def suite_monotone(samples=1000, seed=0) -> dict:
    from .cases import example_case

    checks = {}
    cases = [(f"example{c}", example_case(c)) for c in (1, 3, 4)]
    base = cases[0][1].params
    from dataclasses import replace

    cases.append(("beta0", replace(base, beta=0.0)))
    for label, item in cases:
        params = item if isinstance(item, PhysicalParams) else item.params
        box = ((0.0, 1.0), (0.0, 1.0)) if isinstance(item, PhysicalParams) else item.darcy_box
        rep = check_monotonicity(params, samples, seed, box=box)
        checks[label] = {"min_margin": rep.min_margin, "max_continuity_ratio": rep.max_continuity_ratio,
                         "seconds": rep.seconds, "passed": rep.passed}
    return checks


def suite_infsup(levels=(2, 4, 8)) -> dict:
    checks = {}
    for form in ("b_S", "a_S"):
        consts = [estimate_infsup(form, lv).constant for lv in levels]
        ratio = max(consts) / min(consts) if min(consts) > 0 else float("inf")
        checks[form] = {"levels": list(levels), "constants": consts, "ratio": ratio,
                        "passed": min(consts) > 0 and ratio < 2.0}
    return checks


SUITES = {"algebra": suite_algebra, "monotone": suite_monotone, "infsup": suite_infsup}


def run_suite(name) -> dict:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r} (choose from {sorted(SUITES)})")
    checks = SUITES[name]()
    return {"suite": name, "passed": all(c["passed"] for c in checks.values()), "checks": checks}
