from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdg.quadrature import MAX_DEGREE, segment_rule, triangle_rule


def tri_monomial_integral(a, b):
    # integral of x^a y^b over the reference triangle
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("degree", range(0, MAX_DEGREE + 1))
def test_segment_exact_on_monomials(degree):
    r = segment_rule(degree)
    for p in range(degree + 1):
        assert np.dot(r.weights, r.points ** p) == pytest.approx(1.0 / (p + 1), rel=1e-13)


@pytest.mark.parametrize("degree", range(0, MAX_DEGREE + 1))
def test_triangle_exact_on_monomials(degree):
    r = triangle_rule(degree)
    x, y = r.points[:, 0], r.points[:, 1]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            got = np.dot(r.weights, x ** a * y ** b)
            assert got == pytest.approx(tri_monomial_integral(a, b), rel=1e-12, abs=1e-16)


def test_triangle_weights_positive_and_points_inside():
    for d in (1, 5, 12):
        r = triangle_rule(d)
        assert np.all(r.weights > 0)
        assert r.weights.sum() == pytest.approx(0.5)
        assert np.all(r.points >= 0) and np.all(r.points.sum(axis=1) <= 1 + 1e-14)


def test_segment_rule_not_exact_beyond_degree():
    r = segment_rule(3)  # two points
    assert abs(np.dot(r.weights, r.points ** 4) - 0.2) > 1e-4


@pytest.mark.parametrize("bad", [-1, MAX_DEGREE + 1, 2.5])
def test_bad_degree_rejected(bad):
    with pytest.raises(ValueError):
        segment_rule(bad)
    with pytest.raises(ValueError):
        triangle_rule(bad)


def test_rules_are_read_only():
    r = triangle_rule(4)
    with pytest.raises(ValueError):
        r.weights[0] = 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 8), st.integers(0, 8))
def test_triangle_random_monomial(a, b):
    r = triangle_rule(a + b)
    got = np.dot(r.weights, r.points[:, 0] ** a * r.points[:, 1] ** b)
    assert got == pytest.approx(tri_monomial_integral(a, b), rel=1e-12)
