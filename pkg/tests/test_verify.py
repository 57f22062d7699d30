import pytest
from dataclasses import replace

from sdg.cases import example_case
from sdg.forms import PhysicalParams
from sdg.verify import (ADJOINT_TOL, check_adjoints, check_monotonicity, estimate_infsup, fit_rate,
                        orthogonality_defect, orthogonality_defect_tensor, run_suite)
from tests.conftest import make_problem


def test_fit_rate_exact_power_law():
    pts = [(h, 3.0 * h ** 2) for h in (0.5, 0.25, 0.125, 0.0625)]
    fit = fit_rate(pts)
    assert fit.slope == pytest.approx(2.0)
    assert fit.last_ratio == pytest.approx(2.0)
    assert fit.within(1.8, 2.2) and not fit.within(0.8, 1.2)


def test_fit_rate_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_rate([(0.5, 1.0), (0.25, 0.2)])
    with pytest.raises(ValueError):
        fit_rate([(0.25, 1.0), (0.5, 0.5), (0.125, 0.1)])


def test_fit_rate_skips_nonpositive_errors():
    pts = [(0.5, 0.0), (0.25, 1.0), (0.125, 0.25), (0.0625, 0.0625)]
    assert fit_rate(pts).slope == pytest.approx(2.0)


@pytest.mark.parametrize("nd", [None, 3])
def test_adjoints(nd):
    pr = make_problem(1, 2, nd=nd)
    adj = check_adjoints(pr["system"])
    assert adj["worst"] < ADJOINT_TOL and adj["interface"] < ADJOINT_TOL


def test_orthogonality(small_problem):
    case, S = small_problem["case"], small_problem["spaces"]
    assert orthogonality_defect(case.u_D, S.VD, S.UD)[0] < 1e-11
    assert orthogonality_defect_tensor(case.sigma, S.VS, S.US)[0] < 1e-11


def test_monotonicity_holds_for_examples():
    for cid in (1, 3, 4):
        c = example_case(cid)
        rep = check_monotonicity(c.params, 1000, seed=cid, box=c.darcy_box)
        assert rep.passed, (cid, rep)
        assert rep.seconds < 1.0


def test_monotonicity_affine_limit():
    p = PhysicalParams()
    rep = check_monotonicity(p, 200)
    assert rep.min_margin >= 1 - 1e-12
    weak = check_monotonicity(replace(p, beta=0.0), 200)
    # affine map: margin is exactly one, continuity ratio at most one
    assert weak.min_margin == pytest.approx(1.0)
    with pytest.raises(ValueError):
        check_monotonicity(p, 0)


def test_infsup_positive():
    for form in ("b_S", "a_S"):
        est = estimate_infsup(form, 2)
        assert est.constant > 0.1
    with pytest.raises(ValueError):
        estimate_infsup("c_D", 2)


def test_monotone_suite():
    rep = run_suite("monotone")
    assert rep["passed"]
    with pytest.raises(ValueError):
        run_suite("nope")
