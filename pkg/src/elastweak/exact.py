"""Exact rational linear algebra on small dense matrices.

Thin wrappers around python-flint; matrices are passed as nested
sequences of ints/Fractions and results come back as Fractions.
"""

from __future__ import annotations

from fractions import Fraction
from math import lcm

import flint
import numpy as np


def _to_fmpq(x):
    x = Fraction(x) if not isinstance(x, Fraction) else x
    return flint.fmpq(x.numerator, x.denominator)


def to_fmpq_mat(a) -> flint.fmpq_mat:
    a = np.asarray(a, dtype=object)
    if a.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    m, n = a.shape
    return flint.fmpq_mat(m, n, [_to_fmpq(x) for x in a.ravel()])


def from_fmpq_mat(m) -> np.ndarray:
    out = np.empty((m.nrows(), m.ncols()), dtype=object)
    for i in range(m.nrows()):
        for j in range(m.ncols()):
            x = m[i, j]
            out[i, j] = Fraction(int(x.p), int(x.q))
    return out


def inverse(a) -> np.ndarray:
    """Exact inverse; raises ZeroDivisionError if singular."""
    m = to_fmpq_mat(a)
    if m.nrows() != m.ncols():
        raise ValueError("inverse needs a square matrix")
    if m.nrows() == 0:
        return np.empty((0, 0), dtype=object)
    return from_fmpq_mat(m.inv())


def solve(a, b) -> np.ndarray:
    b = np.asarray(b, dtype=object)
    vec = b.ndim == 1
    x = from_fmpq_mat(to_fmpq_mat(a).solve(to_fmpq_mat(b.reshape(len(b), -1))))
    return x[:, 0] if vec else x


def rank(a) -> int:
    """Exact rank of a rational matrix (row-scaled to integers)."""
    a = np.asarray(a, dtype=object)
    if a.size == 0:
        return 0
    rows = []
    for row in a:
        fr = [Fraction(x) for x in row]
        den = lcm(*(x.denominator for x in fr))
        rows.append([int(x * den) for x in fr])
    m, n = a.shape
    return flint.fmpz_mat(m, n, [x for r in rows for x in r]).rank()


def pivot_columns(a) -> list:
    """Indices of a maximal set of independent columns, chosen greedily."""
    a = np.asarray(a, dtype=object)
    if a.size == 0:
        return []
    red, rk = to_fmpq_mat(a).rref()
    piv = []
    for i in range(rk):
        for j in range(red.ncols()):
            if red[i, j] != 0:
                piv.append(j)
                break
    return piv


def det(a):
    m = to_fmpq_mat(a).det()
    return Fraction(int(m.p), int(m.q))
