"""Picard iteration for the coupled Stokes / Darcy-Forchheimer system."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .forms import BlockSystem, DiscreteField, assemble_picard_darcy, mass_matrix

log = logging.getLogger(__name__)

INITIAL_GUESSES = ("zero", "darcy-linear", "random")


class FactorizationError(RuntimeError):
    pass


class StagnationError(RuntimeError):
    pass


class NonconvergenceError(RuntimeError):
    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


@dataclass(frozen=True)
class PicardSettings:
    tol_rel: float = 1e-10
    tol_res: float = 1e-10
    max_iters: int = 50
    initial_guess: str = "zero"
    damping: float = 1.0
    seed: int = 0
    linear: str = "direct"

    def __post_init__(self):
        if not (self.tol_rel > 0 and self.tol_res > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.initial_guess not in INITIAL_GUESSES:
            raise ValueError(f"initial_guess must be one of {INITIAL_GUESSES}")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class SolveTrace:
    increments: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    linear_stats: list = field(default_factory=list)
    converged: bool = False

    def __len__(self):
        return len(self.increments)

    @property
    def iterations(self):
        return len(self.increments)

    def to_rows(self):
        return [{"iter": i + 1, "increment": inc, "residual": res, **stats}
                for i, (inc, res, stats) in enumerate(zip(self.increments, self.residuals,
                                                          self.linear_stats))]


def linear_solve(A, b, contract="direct", tol=1e-10, maxiter=2000):
    """Solve A x = b.

    ``contract`` is 'direct' (sparse LU with iterative refinement, relative
    residual <= 1e-10) or 'iterative' (ILU-preconditioned GMRES to ``tol``).
    Returns (x, stats).
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    n, m = A.shape
    if n != m or b.shape != (n,):
        raise ValueError("linear_solve needs a square matrix and a matching right-hand side")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), {"residual": 0.0, "refinements": 0, "seconds": 0.0}
    t0 = time.perf_counter()
    if contract == "direct":
        try:
            lu = spla.splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise FactorizationError(f"sparse LU failed: {exc}") from exc
        x = lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise FactorizationError("sparse LU produced non-finite values (singular system)")
        r = b - A @ x
        steps = 0
        while np.linalg.norm(r) > 1e-12 * bnorm and steps < 3:
            x = x + lu.solve(r)
            r = b - A @ x
            steps += 1
        rel = np.linalg.norm(r) / bnorm
        if rel > 1e-10:
            raise FactorizationError(f"direct solve residual {rel:.2e} exceeds 1e-10 (near-singular)")
        return x, {"residual": float(rel), "refinements": steps, "seconds": time.perf_counter() - t0}
    if contract == "iterative":
        ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
        x, info = spla.gmres(A, b, M=M, rtol=tol, atol=0.0, restart=200, maxiter=maxiter)
        rel = np.linalg.norm(b - A @ x) / bnorm
        if info != 0 or rel > 10 * tol:
            raise StagnationError(f"GMRES stagnated (info={info}, residual {rel:.2e})")
        return x, {"residual": float(rel), "refinements": 0, "seconds": time.perf_counter() - t0}
    raise ValueError(f"unknown linear-solver contract {contract!r}")


class BlockDiagonal:
    """Block structure of a sparse matrix whose graph splits into small components."""

    def __init__(self, pattern):
        pattern = sp.csr_matrix(pattern)
        n = pattern.shape[0]
        nb, label = connected_components(pattern, directed=False)
        order = np.argsort(label, kind="stable")
        counts = np.bincount(label, minlength=nb)
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        pos = np.empty(n, dtype=int)
        pos[order] = np.arange(n) - np.repeat(start, counts)
        self.n, self.nb, self.label, self.pos = n, nb, label, pos
        self.size = int(counts.max()) if n else 0
        self.counts = counts

    def inverse(self, M):
        """Sparse inverse of M, which must share this block pattern."""
        M = sp.coo_matrix(M)
        if np.any(self.label[M.row] != self.label[M.col]):
            raise ValueError("matrix couples different diagonal blocks")
        s = self.size
        D = np.zeros((self.nb, s, s))
        D[:, np.arange(s), np.arange(s)] = 1.0
        D[:, np.arange(s), np.arange(s)] *= (np.arange(s)[None] >= self.counts[:, None])
        np.add.at(D, (self.label[M.row], self.pos[M.row], self.pos[M.col]), M.data)
        try:
            Dinv = np.linalg.inv(D)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError("singular diagonal block in static condensation") from exc
        idx = np.full((self.nb, s), -1)
        idx[self.label, self.pos] = np.arange(self.n)
        valid = idx >= 0
        mask = valid[:, :, None] & valid[:, None, :]
        rows = np.broadcast_to(idx[:, :, None], mask.shape)[mask]
        cols = np.broadcast_to(idx[:, None, :], mask.shape)[mask]
        return sp.csr_matrix((Dinv[mask], (rows, cols)), shape=(self.n, self.n))


def condensed_solve(A, b, elim, blocks: BlockDiagonal = None, contract="direct"):
    """Solve A x = b after eliminating the block-diagonal unknowns ``elim``.

    The eliminated block is inverted exactly cell by cell; the Schur complement
    on the remaining unknowns goes to ``linear_solve``.  The residual is checked
    on the full system.
    """
    A = sp.csr_matrix(A)
    elim = np.asarray(elim)
    keep = np.setdiff1d(np.arange(A.shape[0]), elim)
    A_ee = A[elim][:, elim]
    if blocks is None:
        blocks = BlockDiagonal(A_ee)
    Einv = blocks.inverse(A_ee)
    A_ek = A[elim][:, keep]
    A_ke = A[keep][:, elim]
    S = (A[keep][:, keep] - A_ke @ (Einv @ A_ek)).tocsc()
    b_e, b_k = b[elim], b[keep]
    x_k, stats = linear_solve(S, b_k - A_ke @ (Einv @ b_e), contract=contract)
    x = np.empty(A.shape[0])
    x[keep] = x_k
    x[elim] = Einv @ (b_e - A_ek @ x_k)
    bnorm = np.linalg.norm(b)
    rel = np.linalg.norm(b - A @ x) / bnorm if bnorm > 0 else 0.0
    if contract == "direct" and rel > 1e-10:
        raise FactorizationError(f"condensed solve residual {rel:.2e} exceeds 1e-10")
    stats = dict(stats, residual=float(rel), schur_size=len(keep))
    return x, stats


def solve_coupled(system: BlockSystem, rhs, lift, settings: PicardSettings = PicardSettings()):
    """Picard iteration: freeze |u_D^m|, solve the full linear system, repeat.

    ``rhs`` holds the loads, ``lift`` the Dirichlet values of constrained DOFs.
    The flux and Darcy-velocity unknowns are condensed out cell by cell before
    each factorization.  Returns (fields dict, full solution vector, SolveTrace).
    """
    spaces = system.spaces
    params = system.params
    VD = spaces.VD
    off = spaces.offsets()
    sl_uD = slice(off["uD"], off["uD"] + VD.ndof)
    cons = spaces.constrained_mask()
    free = np.flatnonzero(~cons)
    fixed = np.flatnonzero(cons)
    x_c = lift[fixed]
    mass_D = mass_matrix(VD)

    local = np.zeros(spaces.ntotal, dtype=bool)
    local[off["sigma"]:off["sigma"] + spaces.sizes["sigma"]] = True
    local[sl_uD] = True
    elim = np.flatnonzero(local[free])
    blocks = None

    def l2(v):
        return float(np.sqrt(max(v @ (mass_D @ v), 0.0)))

    def reduced(M_A):
        A = system.matrix(M_A)
        A_f = A[free]
        return A_f[:, free].tocsr(), rhs[free] - A_f[:, fixed] @ x_c

    trace = SolveTrace()
    if settings.initial_guess == "random":
        u_prev = np.random.default_rng(settings.seed).standard_normal(VD.ndof)
    else:
        u_prev = np.zeros(VD.ndof)
    first_params = _without_beta(params) if settings.initial_guess == "darcy-linear" else params
    A_ff, b_f = reduced(assemble_picard_darcy(DiscreteField(VD, u_prev[None]), first_params, VD))
    # with beta = 0 the frozen coefficient is inert and one solve is exact
    affine = params.beta == 0.0
    for it in range(settings.max_iters):
        if blocks is None:
            blocks = BlockDiagonal(A_ff[elim][:, elim])
        x_f, stats = condensed_solve(A_ff, b_f, elim, blocks, contract=settings.linear)
        x = np.zeros(spaces.ntotal)
        x[free] = x_f
        x[fixed] = x_c
        u_new = x[sl_uD].copy()
        if settings.damping < 1.0 and it > 0:
            u_new = settings.damping * u_new + (1.0 - settings.damping) * u_prev
            x[sl_uD] = u_new
        inc = l2(u_new - u_prev) / max(1.0, l2(u_new))
        A_ff, b_f = reduced(assemble_picard_darcy(DiscreteField(VD, u_new[None]), params, VD))
        res = float(np.linalg.norm(A_ff @ x[free] - b_f) / max(1.0, np.linalg.norm(b_f)))
        trace.increments.append(inc)
        trace.residuals.append(res)
        trace.linear_stats.append(stats)
        log.debug("picard %d: increment %.3e residual %.3e", it + 1, inc, res)
        u_prev = u_new
        if res <= settings.tol_res and (inc <= settings.tol_rel or affine):
            trace.converged = True
            return spaces.fields(x), x, trace
    raise NonconvergenceError(
        f"Picard iteration did not converge in {settings.max_iters} iterations "
        f"(last increment {trace.increments[-1]:.2e}, residual {trace.residuals[-1]:.2e})", trace)


def _without_beta(params):
    from dataclasses import replace

    return replace(params, beta=0.0)
