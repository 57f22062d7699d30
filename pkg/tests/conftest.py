import numpy as np
import pytest

from sdg.cases import example_case
from sdg.forms import assemble_linear_blocks, assemble_rhs, build_spaces, dirichlet_values
from sdg.mesh import DARCY, STOKES, build_interface_glue, build_staggered, generate_primal

# lines collected by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES = []


def make_problem(case_id=1, nx=2, kind="triangular", nd=None, k=1, distortion=0.0, seed=0):
    """Meshes, spaces, assembled blocks, loads and lift of a small coupled problem."""
    case = example_case(case_id)
    nd = nx if nd is None else nd
    pS = generate_primal(kind, nx, nx, domain=case.stokes_box, distortion=distortion, seed=seed,
                         subdomain=STOKES, interface_side=case.stokes_interface_side)
    pD = generate_primal(kind, nd, nd, domain=case.darcy_box, distortion=distortion, seed=seed + 1,
                         subdomain=DARCY, interface_side=case.darcy_interface_side)
    mS, mD = build_staggered(pS), build_staggered(pD)
    glue = build_interface_glue(mS, mD)
    spaces = build_spaces(mS, mD, k, case.darcy_dirichlet_filter)
    system = assemble_linear_blocks(mS, mD, spaces, case.params, glue)
    rhs = assemble_rhs(case, spaces, glue)
    lift = dirichlet_values(spaces, case)
    return {"case": case, "meshes": (mS, mD), "glue": glue, "spaces": spaces,
            "system": system, "rhs": rhs, "lift": lift}


@pytest.fixture(scope="session")
def unit_mesh():
    return build_staggered(generate_primal("triangular", 3, 3))


@pytest.fixture(scope="session")
def small_problem():
    return make_problem(1, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
