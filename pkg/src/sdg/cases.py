"""Benchmark problems: exact fields, derived sources and interface data.

Sources are differentiated symbolically with sympy and turned into numpy
callables.  Vector callables return arrays shaped (2, ...) and tensors
(2, 2, ...), indexed [component][derivative direction].
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import sympy as sp_

from .forms import PhysicalParams

X, Y = sp_.symbols("x y", real=True)


class UnknownCaseError(KeyError):
    pass


def _lambdify_scalar(expr):
    f = sp_.lambdify((X, Y), expr, "numpy")

    def call(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(np.asarray(f(x, y), dtype=float), np.broadcast(x, y).shape).copy()

    call.expr = expr
    return call


def _lambdify_array(exprs):
    parts = [_lambdify_scalar(e) for e in exprs]

    def call(x, y):
        return np.stack([p(x, y) for p in parts])

    call.expr = exprs
    return call


def _lambdify_tensor(rows):
    parts = [[_lambdify_scalar(e) for e in row] for row in rows]

    def call(x, y):
        return np.stack([np.stack([p(x, y) for p in row]) for row in parts])

    call.expr = rows
    return call


# -- permeability -------------------------------------------------------------------

@dataclass(frozen=True)
class PermeabilityField:
    """K = identity, K^-1 = varrho I (oscillatory), or K = varrho I (high contrast)."""

    kind: str = "identity"
    eps: float = 1.0 / 16.0
    regions: tuple = ()
    value: float = 1e4

    def varrho(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "oscillatory":
            e = self.eps
            return ((2 + 1.8 * np.sin(2 * np.pi * x / e)) / (2 + 1.8 * np.sin(2 * np.pi * y / e))
                    + (2 + 1.8 * np.sin(2 * np.pi * y / e)) / (2 + 1.8 * np.cos(2 * np.pi * x / e)))
        if self.kind == "high-contrast":
            out = np.ones(np.broadcast(x, y).shape)
            for (xa, xb), (ya, yb) in self.regions:
                inside = (x >= xa) & (x <= xb) & (y >= ya) & (y <= yb)
                out = np.where(inside, self.value, out)
            return out
        return np.ones(np.broadcast(x, y).shape)

    def K(self, x, y):
        s = self.varrho(x, y)
        if self.kind == "oscillatory":
            s = 1.0 / s
        return s[..., None, None] * np.eye(2)

    def K_inv(self, x, y):
        s = self.varrho(x, y)
        if self.kind != "oscillatory":
            s = 1.0 / s
        return s[..., None, None] * np.eye(2)

    def sym_K_inv(self):
        if self.kind == "identity":
            return sp_.eye(2)
        if self.kind == "oscillatory":
            e = sp_.Rational(1, 1) * self.eps
            a = 2 + sp_.Rational(9, 5) * sp_.sin(2 * sp_.pi * X / e)
            b = 2 + sp_.Rational(9, 5) * sp_.sin(2 * sp_.pi * Y / e)
            c = 2 + sp_.Rational(9, 5) * sp_.cos(2 * sp_.pi * X / e)
            return (a / b + b / c) * sp_.eye(2)
        raise ValueError("high-contrast permeability has no symbolic form")


def eval_permeability(perm: PermeabilityField, x, y):
    """2x2 permeability tensor K at (x, y)."""
    return perm.K(x, y)


# -- manufactured sources ---------------------------------------------------------

def manufacture_sources(u_S, p_S, u_D, p_D, params: PhysicalParams, K_inv=None,
                        n_s=(0.0, 1.0), t=None):
    """Symbolic sources of the strong form and interface defects g1, g2.

    Arguments are sympy expressions in x, y (vectors as 2-sequences).
    Returns a dict of sympy expressions.
    """
    K_inv = sp_.eye(2) if K_inv is None else K_inv
    nu, mu, rho, beta, G = (sp_.nsimplify(v) for v in (params.nu, params.mu, params.rho,
                                                         params.beta, params.G))
    u_S = sp_.Matrix(u_S)
    u_D = sp_.Matrix(u_D)
    grad_u = sp_.Matrix(2, 2, lambda i, j: sp_.diff(u_S[i], (X, Y)[j]))
    sigma = -nu * grad_u
    f_S = sp_.Matrix([sp_.diff(sigma[i, 0], X) + sp_.diff(sigma[i, 1], Y) + sp_.diff(p_S, (X, Y)[i])
                      for i in range(2)])
    f_D = sp_.diff(u_D[0], X) + sp_.diff(u_D[1], Y)
    speed = sp_.sqrt(u_D[0] ** 2 + u_D[1] ** 2)
    g_D = (mu / rho) * K_inv * u_D + (beta / rho) * speed * u_D + sp_.Matrix(
        [sp_.diff(p_D, X), sp_.diff(p_D, Y)])
    n = sp_.Matrix([sp_.nsimplify(n_s[0]), sp_.nsimplify(n_s[1])])
    tt = sp_.Matrix([n[1], -n[0]]) if t is None else sp_.Matrix([sp_.nsimplify(v) for v in t])
    dudn = grad_u * n
    g1 = p_S - nu * (n.T * dudn)[0] - p_D
    g2 = -nu * (tt.T * dudn)[0] - G * (u_S.T * tt)[0]
    return {"f_S": list(f_S), "f_D": f_D, "g_D": list(g_D), "g1": g1, "g2": g2,
            "grad_u_S": grad_u.tolist(), "grad_p_D": [sp_.diff(p_D, X), sp_.diff(p_D, Y)],
            "div_u_S": sp_.diff(u_S[0], X) + sp_.diff(u_S[1], Y)}


# -- cases -------------------------------------------------------------------------------

@dataclass
class ManufacturedCase:
    name: str
    stokes_box: tuple
    darcy_box: tuple
    stokes_interface_side: str
    params: PhysicalParams
    permeability: PermeabilityField
    f_S: object
    f_D: object
    g_D: object
    g1: object
    g2: object
    stokes_dirichlet: object
    darcy_dirichlet: object
    darcy_dirichlet_filter: object = None
    has_exact: bool = True
    u_S: object = None
    p_S: object = None
    u_D: object = None
    p_D: object = None
    grad_u_S: object = None
    grad_p_D: object = None
    symbolic: dict = field(default_factory=dict, repr=False)

    @property
    def darcy_interface_side(self):
        return {"top": "bottom", "bottom": "top"}[self.stokes_interface_side]

    @property
    def n_s(self):
        return np.array([0.0, 1.0]) if self.stokes_interface_side == "top" else np.array([0.0, -1.0])

    @property
    def interface_y(self):
        (_, _), (y0, y1) = self.stokes_box
        return y1 if self.stokes_interface_side == "top" else y0

    def sigma(self, x, y):
        return -self.params.nu * self.grad_u_S(x, y)


def _exact_case(name, stokes_box, darcy_box, side, u_S, p_S, u_D, p_D, perm, G=1.0):
    params = PhysicalParams(mu=1.0, rho=1.0, beta=1.0, nu=1.0, G=G, K=perm.K, K_inv=perm.K_inv)
    n_s = (0.0, 1.0) if side == "top" else (0.0, -1.0)
    src = manufacture_sources(u_S, p_S, u_D, p_D, params, K_inv=perm.sym_K_inv(), n_s=n_s)
    uS = _lambdify_array(u_S)
    pD = _lambdify_scalar(p_D)
    return ManufacturedCase(
        name=name, stokes_box=stokes_box, darcy_box=darcy_box, stokes_interface_side=side,
        params=params, permeability=perm,
        f_S=_lambdify_array(src["f_S"]), f_D=_lambdify_scalar(src["f_D"]),
        g_D=_lambdify_array(src["g_D"]), g1=_lambdify_scalar(src["g1"]),
        g2=_lambdify_scalar(src["g2"]), stokes_dirichlet=uS, darcy_dirichlet=pD,
        has_exact=True, u_S=uS, p_S=_lambdify_scalar(p_S), u_D=_lambdify_array(u_D), p_D=pD,
        grad_u_S=_lambdify_tensor(src["grad_u_S"]), grad_p_D=_lambdify_array(src["grad_p_D"]),
        symbolic={"u_S": u_S, "p_S": p_S, "u_D": u_D, "p_D": p_D, **src})


def _example1(G):
    pi = sp_.pi
    u_S = [-sp_.cos(pi * Y / 2) ** 2 * sp_.sin(pi * X / 2),
           sp_.Rational(1, 4) * sp_.cos(pi * X / 2) * (sp_.sin(pi * Y) + pi * Y)]
    p_S = -pi / 4 * sp_.cos(pi * X / 2) * (Y - 2 * sp_.cos(pi * Y / 2) ** 2)
    u_D = [-sp_.Rational(1, 8) * Y * pi ** 2 * sp_.sin(pi * X / 2),
           sp_.Rational(1, 4) * pi * sp_.cos(pi * X / 2)]
    p_D = -pi / 4 * sp_.cos(pi * X / 2) * Y
    return _exact_case("example1", ((0.0, 1.0), (0.0, 1.0)), ((0.0, 1.0), (1.0, 2.0)), "top",
                       u_S, p_S, u_D, p_D, PermeabilityField("identity"), G)


def _example2(G):
    pi = sp_.pi
    u_S = [X ** 2 * pi * sp_.sin(2 * Y * pi) * (X - 1) ** 2,
           -2 * X * sp_.sin(Y * pi) ** 2 * (2 * X - 1) * (X - 1)]
    p_S = (sp_.cos(1) - 1) * sp_.sin(1) + sp_.cos(Y) * sp_.sin(X)
    u_D = [sp_.sin(pi * X) * sp_.sin(pi * Y),
           -2 * X * sp_.sin(Y * pi) ** 2 * (2 * X - 1) * (X - 1)]
    p_D = sp_.sin(pi * X) * sp_.cos(pi * Y)
    return _exact_case("example2", ((0.0, 1.0), (0.0, 1.0)), ((0.0, 1.0), (1.0, 2.0)), "top",
                       u_S, p_S, u_D, p_D, PermeabilityField("identity"), G)


def _example3(G):
    pi = sp_.pi
    q = Y ** 2 - sp_.Rational(1, 4)
    u_S = [16 * Y * sp_.cos(pi * X) ** 2 * q,
           8 * pi * sp_.cos(pi * X) * sp_.sin(pi * X) * q ** 2]
    p_S = X ** 2
    u_D = [sp_.sin(2 * pi * X) * sp_.cos(2 * pi * Y),
           -sp_.cos(2 * pi * X) * sp_.sin(2 * pi * Y)]
    p_D = sp_.cos(2 * pi * X) * sp_.cos(2 * pi * Y)
    return _exact_case("example3", ((0.0, 1.0), (0.0, 0.5)), ((0.0, 1.0), (0.5, 1.0)), "top",
                       u_S, p_S, u_D, p_D, PermeabilityField("oscillatory", eps=1.0 / 16.0), G)


# high-permeability channels in the Darcy block of the fourth benchmark
EX4_REGIONS = (
    ((-0.5, 1.5), (-0.75, -0.5)),
    ((0.25, 0.5), (-1.75, -0.75)),
    ((0.75, 1.0), (-0.5, -0.25)),
)


def kovasznay_lambda(eps=1.0):
    return -8 * np.pi ** 2 / (1.0 / eps + np.sqrt(1.0 / eps ** 2 + 64 * np.pi ** 2))


def _example4(G):
    lam = kovasznay_lambda(1.0)
    perm = PermeabilityField("high-contrast", regions=EX4_REGIONS, value=1e4)
    params = PhysicalParams(mu=1.0, rho=1.0, beta=1.0, nu=1.0, G=G, K=perm.K, K_inv=perm.K_inv)

    def kov(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        e = np.exp(lam * x)
        return np.stack([1.0 - e * np.cos(2 * np.pi * y), lam / (2 * np.pi) * e * np.sin(2 * np.pi * y)])

    def zero(x, y):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)

    def zero_vec(x, y):
        return np.stack([zero(x, y), zero(x, y)])

    return ManufacturedCase(
        name="example4", stokes_box=((-0.5, 1.5), (0.0, 2.0)), darcy_box=((-0.5, 1.5), (-2.0, 0.0)),
        stokes_interface_side="bottom", params=params, permeability=perm,
        f_S=zero_vec, f_D=zero, g_D=zero_vec, g1=None, g2=None,
        stokes_dirichlet=kov, darcy_dirichlet=zero,
        darcy_dirichlet_filter=lambda mid: abs(mid[1] + 2.0) < 1e-12,
        has_exact=False)


_REGISTRY = {1: _example1, 2: _example2, 3: _example3, 4: _example4}


def example_case(case_id, G=1.0) -> ManufacturedCase:
    """Benchmark 1-4; ``case_id`` may be an int or 'exampleN' / 'N'."""
    key = case_id
    if isinstance(key, str):
        key = key.lower().removeprefix("example").strip()
        key = int(key) if key.isdigit() else key
    if key not in _REGISTRY:
        raise UnknownCaseError(f"unknown case {case_id!r}")
    return _REGISTRY[key](G)


def zero_case(base: ManufacturedCase) -> ManufacturedCase:
    """Same geometry and parameters with all data and exact fields zero."""
    def zero(x, y):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)

    def zvec(x, y):
        return np.stack([zero(x, y), zero(x, y)])

    def zten(x, y):
        return np.stack([zvec(x, y), zvec(x, y)])

    return replace(base, name=base.name + "-zero", f_S=zvec, f_D=zero, g_D=zvec, g1=None, g2=None,
                   stokes_dirichlet=zvec, darcy_dirichlet=zero, has_exact=True, u_S=zvec, p_S=zero,
                   u_D=zvec, p_D=zero, grad_u_S=zten, grad_p_D=zvec, symbolic={})


def with_params(case: ManufacturedCase, **kw) -> ManufacturedCase:
    """Copy of a case with modified physical parameters (sources are NOT re-derived)."""
    return replace(case, params=replace(case.params, **kw))
