import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from sdg.cases import example_case
from sdg.fields import interpolate_Ih, interpolate_Jh
from sdg.femspace import build_dofmap
from sdg.forms import (DiscreteField, PhysicalParams, apply_A, assemble_picard_darcy, b_form,
                       bstar_form, div_form, grad_form, mass_matrix)
from sdg.mesh import build_staggered, generate_primal


@pytest.fixture(scope="module")
def spaces1():
    m = build_staggered(generate_primal("distorted", 3, 3, distortion=0.25, seed=4))
    return m, build_dofmap(m, "U", 1), build_dofmap(m, "V", 1), build_dofmap(m, "P", 1)


def test_params_validation():
    with pytest.raises(ValueError):
        PhysicalParams(mu=0.0)
    with pytest.raises(ValueError):
        PhysicalParams(beta=-1.0)
    with pytest.raises(ValueError):
        PhysicalParams(G=-0.1)


def test_kinv_and_permeability_check():
    p = PhysicalParams(K=lambda x, y: np.broadcast_to(np.diag([2.0, 4.0]), np.shape(x) + (2, 2)))
    np.testing.assert_allclose(p.kinv(np.zeros(3), np.zeros(3))[0], np.diag([0.5, 0.25]))
    assert p.check_permeability(np.zeros((2, 2))) == pytest.approx(2.0)
    bad = PhysicalParams(K=lambda x, y: np.broadcast_to(np.diag([1.0, -1.0]), np.shape(x) + (2, 2)))
    with pytest.raises(ValueError):
        bad.check_permeability(np.zeros((1, 2)))


def test_apply_A_by_hand():
    p = PhysicalParams(mu=2.0, rho=4.0, beta=3.0)
    u = np.array([3.0, 4.0])
    # (2/4) u + (3/4) * 5 * u
    np.testing.assert_allclose(apply_A(u, p), (0.5 + 3.75) * u)
    K = np.diag([2.0, 1.0])
    np.testing.assert_allclose(apply_A(u, p, K), 0.5 * np.array([1.5, 4.0]) + 3.75 * u)


def test_mass_matrix_spd_and_exact(spaces1):
    m, U, V, P = spaces1
    M = mass_matrix(V)
    assert abs(M - M.T).max() < 1e-14
    assert np.linalg.eigvalsh(M.toarray()).min() > 0
    v = interpolate_Jh(lambda x, y: np.stack([x, 1 + 0 * y]), V)
    c = v.coeffs[0]
    assert c @ M @ c == pytest.approx(1 / 3 + 1)
    q = interpolate_Ih(lambda x, y: x + y, U)
    assert q.coeffs[0] @ mass_matrix(U) @ q.coeffs[0] == pytest.approx(7 / 6)


def test_grad_form_is_weak_gradient(spaces1):
    # a(v, q) = -(v, grad q) when q is globally smooth
    m, U, V, P = spaces1
    G = grad_form(V, U)
    assert G.shape == (U.ndof, V.ndof)
    v = interpolate_Jh(lambda x, y: np.stack([x, y]), V)
    q = interpolate_Ih(lambda x, y: x + 2 * y, U)
    assert q.coeffs[0] @ G @ v.coeffs[0] == pytest.approx(-(0.5 + 2 * 0.5))


@pytest.mark.parametrize("k", [1, 2])
def test_adjoint_pairs(k):
    m = build_staggered(generate_primal("distorted", 3, 3, distortion=0.3, seed=0))
    U, V, P = (build_dofmap(m, s, k) for s in "UVP")
    G, D = grad_form(V, U), div_form(U, V)
    assert abs(G - D.T).max() / abs(G).max() < 1e-12
    B, Bs = b_form(U, P), bstar_form(P, U)
    assert abs(B - Bs.T).max() / abs(B).max() < 1e-12


def test_b_form_is_negative_divergence(spaces1):
    m, U, V, P = spaces1
    B = b_form(U, P)
    assert B.shape == (P.ndof, 2 * U.ndof)
    u = interpolate_Ih(lambda x, y: np.stack([x * x, y]), U, ncomp=2)
    one = np.zeros(P.ndof)
    one[::3] = 1.0  # constant monomial of every cell
    # -int div u = -(1 + 1)
    assert one @ B @ u.coeffs.ravel() == pytest.approx(-2.0)


def test_flip_jump_breaks_adjointness(spaces1):
    m, U, V, P = spaces1
    G = grad_form(V, U, flip_jump=True)
    assert abs(G - div_form(U, V).T).max() > 1e-3


def test_picard_matrix(spaces1):
    m, U, V, P = spaces1
    params = PhysicalParams(mu=2.0, rho=1.0, beta=1.0)
    M = mass_matrix(V)
    zero = DiscreteField(V, np.zeros((1, V.ndof)))
    np.testing.assert_allclose(assemble_picard_darcy(zero, params, V).toarray(), 2 * M.toarray(),
                               atol=1e-14)
    # frozen constant speed |(3, 4)| = 5 adds 5 M
    c = interpolate_Jh(lambda x, y: np.stack([3 + 0 * x, 4 + 0 * y]), V)
    np.testing.assert_allclose(assemble_picard_darcy(c, params, V).toarray(), 7 * M.toarray(),
                               atol=1e-12)


def test_coupled_blocks(small_problem):
    sysm = small_problem["system"]
    spaces = small_problem["spaces"]
    A = sysm.matrix(mass_matrix(spaces.VD))
    assert A.shape == (spaces.ntotal, spaces.ntotal)
    b = sysm.blocks
    assert abs(b["C_pD_vS"] + b["C_uS_qD"].T).max() < 1e-13
    assert abs(b["C_BJS"] - b["C_BJS"].T).max() < 1e-13
    assert len(small_problem["rhs"]) == spaces.ntotal


def test_interface_mass_sums_to_interface_length():
    # the BJS term G int u.t v.t with u = v = tangent-constant fields gives G |Gamma|
    from tests.conftest import make_problem

    pr = make_problem(1, 3, nd=4)
    US = pr["spaces"].US
    e = interpolate_Ih(lambda x, y: np.stack([1 + 0 * x, 0 * y]), US, ncomp=2).coeffs.ravel()
    C = pr["system"].blocks["C_BJS"]
    G = example_case(1).params.G
    assert e @ C @ e == pytest.approx(G * 1.0)


def test_rhs_sparse_consistency(small_problem):
    rhs = small_problem["rhs"]
    assert np.all(np.isfinite(rhs))
    assert sp.issparse(small_problem["system"].blocks["aS"])


_vec = st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2).map(np.array)


@settings(max_examples=200, deadline=None)
@given(_vec, _vec, _vec, st.floats(0.0, 5.0))
def test_apply_A_strongly_monotone(u, v, shift, beta):
    p = PhysicalParams(mu=1.5, rho=2.0, beta=beta)
    lhs = (apply_A(u + shift, p) - apply_A(v + shift, p)) @ (u - v)
    assert lhs >= (1.5 / 2.0) * np.sum((u - v) ** 2) * (1 - 1e-12) - 1e-9
