import numpy as np
import pytest
import scipy.sparse as sp

from sdg.cases import zero_case
from sdg.forms import assemble_rhs, dirichlet_values
from sdg.solver import (BlockDiagonal, FactorizationError, NonconvergenceError, PicardSettings,
                        condensed_solve, linear_solve, solve_coupled)
from tests.conftest import make_problem


def test_linear_solve_identity():
    b = np.arange(1.0, 6.0)
    x, stats = linear_solve(sp.identity(5), b)
    np.testing.assert_allclose(x, b)
    assert stats["residual"] < 1e-15


def test_linear_solve_two_by_two():
    A = sp.csr_matrix([[2.0, 1.0], [1.0, 3.0]])
    x, _ = linear_solve(A, np.array([3.0, 5.0]))
    np.testing.assert_allclose(x, [0.8, 1.4])
    xi, _ = linear_solve(A, np.array([3.0, 5.0]), contract="iterative")
    np.testing.assert_allclose(xi, [0.8, 1.4], rtol=1e-9)


def test_linear_solve_zero_rhs_and_errors():
    x, _ = linear_solve(sp.identity(3), np.zeros(3))
    assert not x.any()
    with pytest.raises(FactorizationError):
        linear_solve(sp.csr_matrix([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        linear_solve(sp.identity(3), np.ones(2))
    with pytest.raises(ValueError):
        linear_solve(sp.identity(2), np.ones(2), contract="magic")


def test_block_diagonal_inverse(rng):
    blocks = [rng.standard_normal((s, s)) + 4 * np.eye(s) for s in (3, 1, 4, 3)]
    M = sp.block_diag(blocks).tocsr()
    perm = rng.permutation(M.shape[0])
    Mp = M[perm][:, perm]
    bd = BlockDiagonal(Mp)
    assert bd.nb == 4 and bd.size == 4
    np.testing.assert_allclose(bd.inverse(Mp).toarray(), np.linalg.inv(Mp.toarray()), atol=1e-12)
    with pytest.raises(ValueError):
        bd.inverse(sp.csr_matrix(np.ones(Mp.shape)))


def test_condensed_solve_matches_direct(rng):
    n = 12
    E = sp.block_diag([rng.standard_normal((3, 3)) + 5 * np.eye(3) for _ in range(2)])
    A = sp.lil_matrix((n, n))
    A[:6, :6] = E
    A[6:, 6:] = rng.standard_normal((6, 6)) + 8 * np.eye(6)
    A[:6, 6:] = rng.standard_normal((6, 6))
    A[6:, :6] = rng.standard_normal((6, 6))
    b = rng.standard_normal(n)
    x, stats = condensed_solve(A.tocsr(), b, np.arange(6))
    np.testing.assert_allclose(x, np.linalg.solve(A.toarray(), b), atol=1e-12)
    assert stats["schur_size"] == 6


def test_settings_validation():
    with pytest.raises(ValueError):
        PicardSettings(tol_rel=0.0)
    with pytest.raises(ValueError):
        PicardSettings(max_iters=0)
    with pytest.raises(ValueError):
        PicardSettings(initial_guess="psychic")
    with pytest.raises(ValueError):
        PicardSettings(damping=1.5)


def test_zero_data_converges_in_one_iteration():
    pr = make_problem(1, 2)
    z = zero_case(pr["case"])
    rhs = assemble_rhs(z, pr["spaces"], pr["glue"])
    lift = dirichlet_values(pr["spaces"], z)
    fields, x, trace = solve_coupled(pr["system"], rhs, lift)
    assert trace.iterations == 1 and trace.converged
    assert np.abs(x).max() == 0.0


def test_beta_zero_one_iteration():
    from dataclasses import replace

    pr = make_problem(1, 2)
    system = replace(pr["system"], params=replace(pr["system"].params, beta=0.0))
    _, x, trace = solve_coupled(system, pr["rhs"], pr["lift"])
    assert trace.iterations == 1
    # the one solve satisfies the linear system exactly
    assert trace.residuals[0] < 1e-10


def test_picard_converges_and_trace_rows():
    pr = make_problem(1, 2)
    fields, x, trace = solve_coupled(pr["system"], pr["rhs"], pr["lift"], PicardSettings(max_iters=100))
    assert trace.converged
    assert trace.increments[-1] <= 1e-10 and trace.residuals[-1] <= 1e-10
    rows = trace.to_rows()
    assert rows[0]["iter"] == 1 and len(rows) == trace.iterations
    # Dirichlet values are honoured
    cons = pr["spaces"].constrained_mask()
    np.testing.assert_array_equal(x[cons], pr["lift"][cons])
    assert set(fields) == {"sigma", "uS", "pS", "uD", "pD"}


def test_initial_guesses_agree():
    pr = make_problem(1, 2)
    sols = [solve_coupled(pr["system"], pr["rhs"], pr["lift"],
                          PicardSettings(max_iters=100, initial_guess=g))[1] for g in ("zero", "random")]
    assert np.abs(sols[0] - sols[1]).max() < 1e-9


def test_nonconvergence_reports_trace():
    pr = make_problem(1, 2)
    with pytest.raises(NonconvergenceError) as info:
        solve_coupled(pr["system"], pr["rhs"], pr["lift"], PicardSettings(max_iters=3))
    assert info.value.trace.iterations == 3


def test_iterative_contract_agrees():
    pr = make_problem(1, 2)
    s = PicardSettings(max_iters=100)
    xd = solve_coupled(pr["system"], pr["rhs"], pr["lift"], s)[1]
    xi = solve_coupled(pr["system"], pr["rhs"], pr["lift"], PicardSettings(max_iters=100, linear="iterative"))[1]
    assert np.abs(xd - xi).max() < 1e-7 * max(1.0, np.abs(xd).max())
