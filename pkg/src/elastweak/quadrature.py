"""Positive-weight quadrature on simplices by collapsed Gauss-Jacobi products."""

from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 20


@lru_cache(maxsize=None)
def _jacobi01(m: int, alpha: int):
    """m-point Gauss rule on [0, 1] for the weight (1 - u)^alpha."""
    t, w = roots_jacobi(m, alpha, 0)
    return (1 + t) / 2, w / 2 ** (alpha + 1)


@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int):
    """Points and weights on the reference ``dim``-simplex.

    The reference simplex is ``t_j >= 0, sum t_j <= 1``.  The rule integrates
    polynomials of total degree ``<= degree`` exactly and has positive weights.

    Returns
    -------
    points : (nq, dim) ndarray
    weights : (nq,) ndarray, summing to ``1/dim!``
    """
    if degree < 0 or degree > MAX_DEGREE:
        raise ValueError(f"quadrature degree must lie in 0..{MAX_DEGREE}, got {degree}")
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    m = degree // 2 + 1
    rules = [_jacobi01(m, dim - 1 - i) for i in range(dim)]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrid = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    u = [g.ravel() for g in grids]
    w = np.prod([g.ravel() for g in wgrid], axis=0)
    pts = np.empty((len(w), dim))
    scale = np.ones(len(w))
    for i in range(dim):
        pts[:, i] = u[i] * scale
        scale = scale * (1 - u[i])
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


def quadrature_rule(degree: int):
    """Rule on the reference tetrahedron exact to ``degree``."""
    return simplex_rule(3, degree)


def simplex_volume(dim: int) -> float:
    return 1.0 / factorial(dim)
