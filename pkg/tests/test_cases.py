import numpy as np
import pytest
import sympy as sp_

from sdg.cases import (EX4_REGIONS, PermeabilityField, UnknownCaseError, X, Y, example_case,
                       kovasznay_lambda, manufacture_sources, with_params, zero_case)
from sdg.fields import compute_norm
from sdg.mesh import DARCY, build_staggered, generate_primal

PI = np.pi


@pytest.fixture(scope="module")
def ex1():
    return example_case(1)


def test_registry_aliases():
    assert example_case("example2").name == "example2"
    assert example_case("3").name == "example3"
    with pytest.raises(UnknownCaseError):
        example_case(7)


def test_ex1_point_values(ex1):
    np.testing.assert_allclose(ex1.u_D(1.0, 1.0), [-PI ** 2 / 8, 0.0], atol=1e-15)
    assert ex1.f_D(0.0, 1.0) == pytest.approx(-PI ** 3 / 16)
    assert ex1.p_D(0.0, 1.0) == pytest.approx(-PI / 4)
    np.testing.assert_allclose(ex1.u_S(1.0, 0.0), [-1.0, 0.0], atol=1e-15)


def test_ex1_darcy_velocity_norm(ex1):
    mD = build_staggered(generate_primal("triangular", 6, 6, domain=ex1.darcy_box, subdomain=DARCY))
    got = compute_norm(None, "L2", exact=ex1.u_D, mesh=mD, ncomp=2) ** 2
    assert got == pytest.approx(7 * PI ** 4 / 384 + PI ** 2 / 32, rel=1e-10)


def test_oscillatory_permeability():
    perm = example_case(3).permeability
    assert perm.varrho(0.0, 0.0) == pytest.approx(1.5263157895, abs=1e-10)
    x, y = np.array([0.01, 0.3]), np.array([0.02, 0.7])
    np.testing.assert_allclose(perm.K(x, y) @ perm.K_inv(x, y), np.broadcast_to(np.eye(2), (2, 2, 2)),
                               atol=1e-14)
    sym = sp_.lambdify((X, Y), perm.sym_K_inv()[0, 0])
    assert sym(0.3, 0.7) == pytest.approx(perm.varrho(0.3, 0.7))


def test_high_contrast_permeability():
    perm = PermeabilityField("high-contrast", regions=EX4_REGIONS, value=1e4)
    assert perm.varrho(0.0, -0.6) == 1e4
    assert perm.varrho(0.0, -1.9) == 1.0
    with pytest.raises(ValueError):
        perm.sym_K_inv()


def _fd_div_rows(T, x, y, h=1e-5):
    # row-wise divergence of a (2, 2) tensor callable by central differences
    dx = (T(x + h, y) - T(x - h, y)) / (2 * h)
    dy = (T(x, y + h) - T(x, y - h)) / (2 * h)
    return dx[:, 0] + dy[:, 1]


@pytest.mark.parametrize("cid", [1, 2, 3])
def test_sources_against_finite_differences(cid):
    c = example_case(cid)
    (x0, x1), (y0, y1) = c.stokes_box
    x, y = 0.37 * (x1 - x0) + x0, 0.61 * (y1 - y0) + y0
    h = 1e-5
    gp = np.array([(c.p_S(x + h, y) - c.p_S(x - h, y)) / (2 * h), (c.p_S(x, y + h) - c.p_S(x, y - h)) / (2 * h)])
    np.testing.assert_allclose(c.f_S(x, y), _fd_div_rows(c.sigma, x, y) + gp, atol=1e-6)
    # continuity in Stokes
    g = c.grad_u_S(x, y)
    assert abs(g[0, 0] + g[1, 1]) < 1e-12
    (x0, x1), (y0, y1) = c.darcy_box
    x, y = 0.41 * (x1 - x0) + x0, 0.29 * (y1 - y0) + y0
    div = ((c.u_D(x + h, y)[0] - c.u_D(x - h, y)[0]) + (c.u_D(x, y + h)[1] - c.u_D(x, y - h)[1])) / (2 * h)
    assert c.f_D(x, y) == pytest.approx(div, abs=1e-6)
    u = c.u_D(x, y)
    gpD = np.array([(c.p_D(x + h, y) - c.p_D(x - h, y)) / (2 * h), (c.p_D(x, y + h) - c.p_D(x, y - h)) / (2 * h)])
    want = c.params.kinv(x, y) @ u + np.linalg.norm(u) * u + gpD
    np.testing.assert_allclose(c.g_D(x, y), want, atol=1e-6)
    np.testing.assert_allclose(c.grad_p_D(x, y), gpD, atol=1e-7)


@pytest.mark.parametrize("cid", [1, 2, 3])
def test_interface_defects(cid):
    c = example_case(cid)
    x, yG = 0.3, c.interface_y
    n = c.n_s
    t = np.array([n[1], -n[0]])
    g = c.grad_u_S(x, yG)
    dudn = g @ n
    assert c.g1(x, yG) == pytest.approx(c.p_S(x, yG) - dudn @ n - c.p_D(x, yG))
    assert c.g2(x, yG) == pytest.approx(-(dudn @ t) - c.params.G * (c.u_S(x, yG) @ t))


def test_ex1_mass_conservation_across_interface(ex1):
    # normal velocities match on the interface
    xs = np.linspace(0, 1, 7)
    np.testing.assert_allclose(ex1.u_S(xs, 1.0 + 0 * xs)[1], ex1.u_D(xs, 1.0 + 0 * xs)[1], atol=1e-14)


def test_manufacture_sources_symbolic_identity():
    # a hand-made field with known sources
    from sdg.forms import PhysicalParams

    src = manufacture_sources([Y, 0], X, [X, -Y], X * Y, PhysicalParams(beta=0.0))
    assert sp_.simplify(src["f_S"][0] - 1) == 0 and sp_.simplify(src["f_S"][1]) == 0
    assert src["f_D"] == 0
    assert sp_.simplify(src["g_D"][0] - (X + Y)) == 0


def test_example4():
    c = example_case(4)
    assert not c.has_exact
    assert kovasznay_lambda(1.0) == pytest.approx(-8 * PI ** 2 / (1 + np.sqrt(1 + 64 * PI ** 2)))
    h = 1e-6
    x, y = 0.2, 0.7
    div = ((c.stokes_dirichlet(x + h, y)[0] - c.stokes_dirichlet(x - h, y)[0])
           + (c.stokes_dirichlet(x, y + h)[1] - c.stokes_dirichlet(x, y - h)[1])) / (2 * h)
    assert abs(div) < 1e-6
    assert c.darcy_dirichlet_filter(np.array([0.1, -2.0]))
    assert not c.darcy_dirichlet_filter(np.array([1.5, -1.0]))


def test_zero_case_and_with_params(ex1):
    z = zero_case(ex1)
    assert np.all(z.f_S(np.ones(3), np.ones(3)) == 0)
    assert z.params is ex1.params
    w = with_params(ex1, beta=0.0)
    assert w.params.beta == 0.0 and ex1.params.beta == 1.0
