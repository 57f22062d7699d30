"""Gauss quadrature on the reference segment [0, 1] and reference triangle.

The reference triangle has vertices (0, 0), (1, 0), (0, 1) and area 1/2.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 20


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


def _check_degree(degree):
    if not isinstance(degree, (int, np.integer)) or degree < 0 or degree > MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree!r} (0..{MAX_DEGREE})")


def _npoints(degree):
    # n-point Gauss is exact to 2n - 1
    return max(1, (degree + 2) // 2)


@lru_cache(maxsize=None)
def segment_rule(degree: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1] exact for polynomials of `degree`."""
    _check_degree(degree)
    x, w = np.polynomial.legendre.leggauss(_npoints(degree))
    pts = 0.5 * (x + 1.0)
    pts.setflags(write=False)
    w = 0.5 * w
    w.setflags(write=False)
    return QuadRule(pts, w, degree)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadRule:
    """Collapsed (conical product) Gauss rule on the reference triangle.

    Gauss-Jacobi(1, 0) in the collapsed direction times Gauss-Legendre in
    the other; all weights are positive and sum to 1/2.
    """
    _check_degree(degree)
    n = _npoints(degree)
    tj, wj = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (tj + 1.0)
    wu = 0.25 * wj
    tl, wl = np.polynomial.legendre.leggauss(n)
    v = 0.5 * (tl + 1.0)
    wv = 0.5 * wl
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    w = np.outer(wu, wv).ravel()
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(pts, w, degree)
