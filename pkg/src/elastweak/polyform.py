"""Exact polynomial exterior calculus on R^n (n <= 3).

A :class:`PolyForm` is a polynomial differential k-form whose values lie in
one of the value spaces R, V (3-vectors), K (skew 3x3 matrices, stored by
axial vector) or M (3x3 matrices, row-major).  Coefficients may be
:class:`fractions.Fraction` (exact mode) or floats.

Skew matrices use the basis ``E_i = vect_inv(e_i)`` so that the coordinate
vector of a skew matrix is its axial vector.  With this basis the Frobenius
product is ``E_i : E_j = 2 delta_ij``.

The algebraic operators used in the elasticity construction live here too:
``K``, ``S``, ``S'``, the matrix identifications and the second order
operator ``J = curl Xi^{-1} curl``.
"""

from __future__ import annotations

import contextlib
import enum
import itertools
import math
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ValueSpace",
    "PolyForm",
    "MatrixField",
    "wedge",
    "koszul",
    "ext_d",
    "vect",
    "vect_inv",
    "sym",
    "skw",
    "xi",
    "xi_inv",
    "K_op",
    "K_prime_op",
    "S_op",
    "S_prime_op",
    "S1_inv",
    "matrix_proxy_1",
    "matrix_proxy_2",
    "matrix_from_proxy_1",
    "matrix_from_proxy_2",
    "J_op",
    "cross_skew_check",
    "random_polyform",
    "random_matrix_field",
]


class ValueSpace(enum.Enum):
    R = "R"
    V = "V"
    K = "K"
    M = "M"

    @property
    def dim(self) -> int:
        return {"R": 1, "V": 3, "K": 3, "M": 9}[self.value]

    @property
    def weight(self) -> int:
        # inner product of basis elements: E_i : E_j = 2 delta_ij for K
        return 2 if self is ValueSpace.K else 1


R, V, K, M = ValueSpace.R, ValueSpace.V, ValueSpace.K, ValueSpace.M

# Levi-Civita symbol as (i, j, k) -> sign, nonzero entries only
_EPS = {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1,
        (0, 2, 1): -1, (2, 1, 0): -1, (1, 0, 2): -1}

# dx_I with I = 2-subset of {0,1,2} in terms of the cross product:
# (v1 x v2)_i = sum over I of sign * dx_I(v1, v2)
_CROSS_2FORM = {0: ((1, 2), 1), 1: ((0, 2), -1), 2: ((0, 1), 1)}


def _perm_sign(seq: Sequence[int]) -> int:
    sign = 1
    seq = list(seq)
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
            elif seq[i] == seq[j]:
                return 0
    return sign


def _add_alpha(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _unit(n, i):
    return tuple(1 if j == i else 0 for j in range(n))


def _det(rows) -> object:
    """Determinant by cofactor expansion (exact for Fractions, k <= 3)."""
    k = len(rows)
    if k == 0:
        return 1
    if k == 1:
        return rows[0][0]
    if k == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    total = 0
    for j in range(k):
        minor = [row[:j] + row[j + 1:] for row in rows[1:]]
        total += (-1) ** j * rows[0][j] * _det(minor)
    return total


class PolyForm:
    """Polynomial k-form on R^n with values in a :class:`ValueSpace`.

    ``terms`` maps ``(I, c, alpha)`` to a coefficient, where ``I`` is the
    sorted tuple of form indices, ``c`` the value component and ``alpha``
    the monomial exponent.  Instances are treated as immutable.
    """

    __slots__ = ("n", "k", "values", "terms")

    def __init__(self, n: int, k: int, values: ValueSpace = R, terms=None):
        if not 0 <= k <= n:
            raise ValueError(f"form degree {k} invalid in dimension {n}")
        self.n = n
        self.k = k
        self.values = values
        clean = {}
        for key, coef in (terms or {}).items():
            if coef != 0:
                clean[key] = coef
        self.terms = clean

    # construction -------------------------------------------------------
    @classmethod
    def zero(cls, n=3, k=0, values=R):
        return cls(n, k, values)

    @classmethod
    def constant(cls, value, n=3, values=R):
        """0-form with constant value (scalar or sequence of components)."""
        vals = [value] if values is R else list(value)
        zero = (0,) * n
        return cls(n, 0, values, {((), c, zero): v for c, v in enumerate(vals)})

    @classmethod
    def coordinate(cls, i: int, n=3):
        return cls(n, 0, R, {((), 0, _unit(n, i)): 1})

    @classmethod
    def monomial(cls, alpha, I=(), c=0, n=3, values=R, coef=1):
        I = tuple(I)
        return cls(n, len(I), values, {(tuple(sorted(I)), c, tuple(alpha)):
                                       coef * _perm_sign(I)})

    @classmethod
    def dx(cls, *I, n=3):
        return cls.monomial((0,) * n, I, n=n)

    # arithmetic ---------------------------------------------------------
    def _check_compatible(self, other):
        if (self.n, self.k, self.values) != (other.n, other.k, other.values):
            raise ValueError("incompatible forms: "
                             f"{(self.n, self.k, self.values)} vs "
                             f"{(other.n, other.k, other.values)}")

    def __add__(self, other):
        if isinstance(other, int) and other == 0:
            return self
        self._check_compatible(other)
        terms = dict(self.terms)
        for key, coef in other.terms.items():
            terms[key] = terms.get(key, 0) + coef
        return PolyForm(self.n, self.k, self.values, terms)

    __radd__ = __add__

    def __neg__(self):
        return PolyForm(self.n, self.k, self.values,
                        {key: -c for key, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, s):
        if isinstance(s, PolyForm):
            return wedge(self, s)
        return PolyForm(self.n, self.k, self.values,
                        {key: c * s for key, c in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, PolyForm):
            return NotImplemented
        return (self.n, self.k, self.values) == (other.n, other.k, other.values) \
            and (self - other).is_zero()

    def __hash__(self):
        return hash((self.n, self.k, self.values, frozenset(self.terms.items())))

    def __repr__(self):
        return (f"PolyForm(n={self.n}, k={self.k}, values={self.values.value}, "
                f"terms={len(self.terms)}, degree={self.degree})")

    def is_zero(self, tol=0) -> bool:
        return all(abs(c) <= tol for c in self.terms.values())

    def max_abs(self):
        return max((abs(c) for c in self.terms.values()), default=0)

    @property
    def degree(self) -> int:
        return max((sum(a) for (_, _, a) in self.terms), default=-1)

    def component(self, c: int) -> "PolyForm":
        """Scalar-valued form of value component ``c``."""
        return PolyForm(self.n, self.k, R, {(I, 0, a): v for (I, cc, a), v
                                            in self.terms.items() if cc == c})

    @staticmethod
    def from_components(comps: Sequence["PolyForm"], values: ValueSpace):
        if len(comps) != values.dim:
            raise ValueError("wrong number of components")
        n, k = comps[0].n, comps[0].k
        terms = {}
        for c, f in enumerate(comps):
            for (I, _, a), v in f.terms.items():
                terms[(I, c, a)] = terms.get((I, c, a), 0) + v
        return PolyForm(n, k, values, terms)

    def with_values(self, values: ValueSpace) -> "PolyForm":
        if values.dim != self.values.dim:
            raise ValueError("value dimension mismatch")
        return PolyForm(self.n, self.k, values, self.terms)

    def to_float(self) -> "PolyForm":
        return PolyForm(self.n, self.k, self.values,
                        {key: float(c) for key, c in self.terms.items()})

    # calculus -----------------------------------------------------------
    def diff(self, i: int) -> "PolyForm":
        """Partial derivative of every coefficient with respect to x_i."""
        terms = {}
        for (I, c, a), v in self.terms.items():
            if a[i]:
                b = a[:i] + (a[i] - 1,) + a[i + 1:]
                terms[(I, c, b)] = terms.get((I, c, b), 0) + v * a[i]
        return PolyForm(self.n, self.k, self.values, terms)

    def mul_coordinate(self, i: int) -> "PolyForm":
        unit = _unit(self.n, i)
        return PolyForm(self.n, self.k, self.values,
                        {(I, c, _add_alpha(a, unit)): v
                         for (I, c, a), v in self.terms.items()})

    def evaluate(self, x: Sequence, vectors: Sequence[Sequence] = ()):
        """Value of the form at ``x`` on the k argument vectors.

        Returns a list with one entry per value component.
        """
        if len(vectors) != self.k:
            raise ValueError(f"expected {self.k} vectors")
        out = [0] * self.values.dim
        minors = {}
        for (I, c, a), v in self.terms.items():
            if I not in minors:
                minors[I] = _det([[vec[i] for vec in vectors] for i in I])
            mono = 1
            for xi_, p in zip(x, a):
                if p:
                    mono = mono * xi_ ** p
            out[c] += v * mono * minors[I]
        return out

    def pullback(self, origin: Sequence, A) -> "PolyForm":
        """Pull back along the affine map ``t -> origin + A t`` (A is n x d)."""
        A = [list(row) for row in A]
        d = len(A[0]) if A else 0
        if len(A) != self.n or len(origin) != self.n:
            raise ValueError("affine map does not match ambient dimension")
        if self.k > d:
            raise ValueError(f"cannot pull a {self.k}-form back to dimension {d}")
        # linear factors x_i = origin_i + sum_j A_ij t_j as scalar polys in t
        zero_t = (0,) * d
        lin = []
        for i in range(self.n):
            p = {}
            if origin[i] != 0:
                p[zero_t] = origin[i]
            for j in range(d):
                if A[i][j] != 0:
                    e = _unit(d, j)
                    p[e] = p.get(e, 0) + A[i][j]
            lin.append(p)
        pow_cache = {}

        def power(i, m):
            key = (i, m)
            if key not in pow_cache:
                if m == 0:
                    pow_cache[key] = {zero_t: 1}
                else:
                    pow_cache[key] = _pmul(power(i, m - 1), lin[i])
            return pow_cache[key]

        mono_cache = {}

        def mono(alpha):
            if alpha not in mono_cache:
                p = {zero_t: 1}
                for i, m in enumerate(alpha):
                    if m:
                        p = _pmul(p, power(i, m))
                mono_cache[alpha] = p
            return mono_cache[alpha]

        J_list = list(itertools.combinations(range(d), self.k))
        minor_cache = {}
        terms = {}
        for (I, c, a), v in self.terms.items():
            if I not in minor_cache:
                minor_cache[I] = [(J, _det([[A[i][j] for j in J] for i in I]))
                                  for J in J_list]
            p = mono(a)
            for J, m in minor_cache[I]:
                if m == 0:
                    continue
                for b, w in p.items():
                    key = (J, c, b)
                    terms[key] = terms.get(key, 0) + v * m * w
        return PolyForm(d, self.k, self.values, terms)

    def integrate_simplex(self):
        """Integral of a top-degree form over the reference n-simplex.

        The simplex ``t_j >= 0, sum t_j <= 1`` carries the orientation of
        ``dt_0 ^ ... ^ dt_{n-1}``.  Returns one value per component.
        """
        if self.k != self.n:
            raise ValueError("only top-degree forms can be integrated")
        out = [0] * self.values.dim
        for (I, c, a), v in self.terms.items():
            out[c] += v * _simplex_monomial_integral(a)
        return out


def _pmul(p, q):
    out = {}
    for a, x in p.items():
        for b, y in q.items():
            key = _add_alpha(a, b)
            out[key] = out.get(key, 0) + x * y
    return out


def _simplex_monomial_integral(alpha) -> Fraction:
    """Exact integral of t^alpha over the reference simplex of dim len(alpha)."""
    num = 1
    for a in alpha:
        num *= math.factorial(a)
    return Fraction(num, math.factorial(sum(alpha) + len(alpha)))


# ---------------------------------------------------------------------------
# wedge, d, kappa

def wedge(a: PolyForm, b: PolyForm) -> PolyForm:
    """Wedge product; values combine as scalar*X or by the inner product X.X."""
    if a.n != b.n:
        raise ValueError("forms live in different dimensions")
    if a.k + b.k > a.n:
        raise ValueError(f"wedge degree overflow: {a.k} + {b.k} > {a.n}")
    if a.values is R:
        out_values, mode = b.values, "right"
    elif b.values is R:
        out_values, mode = a.values, "left"
    elif a.values is b.values:
        out_values, mode = R, "inner"
    else:
        raise ValueError(f"cannot pair values {a.values} and {b.values}")
    w = a.values.weight
    terms = {}
    for (I, ca, al), x in a.terms.items():
        for (J, cb, be), y in b.terms.items():
            if set(I) & set(J):
                continue
            if mode == "inner":
                if ca != cb:
                    continue
                c, coef = 0, w * x * y
            else:
                c, coef = (cb if mode == "right" else ca), x * y
            merged = I + J
            sign = _perm_sign(merged)
            key = (tuple(sorted(merged)), c, _add_alpha(al, be))
            terms[key] = terms.get(key, 0) + sign * coef
    return PolyForm(a.n, a.k + b.k, out_values, terms)


def ext_d(w: PolyForm) -> PolyForm:
    """Exterior derivative."""
    if w.k >= w.n:
        raise ValueError(f"d of a {w.k}-form in dimension {w.n} is not defined")
    terms = {}
    for (I, c, a), v in w.terms.items():
        for i in range(w.n):
            if i in I or a[i] == 0:
                continue
            b = a[:i] + (a[i] - 1,) + a[i + 1:]
            sign = (-1) ** sum(1 for j in I if j < i)
            key = (tuple(sorted(I + (i,))), c, b)
            terms[key] = terms.get(key, 0) + sign * a[i] * v
    return PolyForm(w.n, w.k + 1, w.values, terms)


def koszul(w: PolyForm) -> PolyForm:
    """Koszul differential: contraction with the position vector."""
    if w.k == 0:
        raise ValueError("Koszul differential of a 0-form is not defined")
    terms = {}
    for (I, c, a), v in w.terms.items():
        for pos, i in enumerate(I):
            key = (I[:pos] + I[pos + 1:], c, _add_alpha(a, _unit(w.n, i)))
            terms[key] = terms.get(key, 0) + (-1) ** pos * v
    return PolyForm(w.n, w.k - 1, w.values, terms)


# ---------------------------------------------------------------------------
# pointwise matrix algebra

# sign applied by vect(); flipped only by inject_vect_sign_error() to check
# that the identity suite notices a broken convention
_VECT_SIGN = 1


@contextlib.contextmanager
def inject_vect_sign_error():
    """Temporarily negate ``vect`` (mutation test hook)."""
    global _VECT_SIGN
    _VECT_SIGN = -1
    try:
        yield
    finally:
        _VECT_SIGN = 1


def vect(q, tol=0):
    """Axial vector of a skew matrix."""
    q = np.asarray(q)
    if any(abs(q[i, j] + q[j, i]) > tol for i in range(3) for j in range(3)):
        raise ValueError("vect expects a skew-symmetric matrix")
    return _VECT_SIGN * np.array([q[2, 1], q[0, 2], q[1, 0]], dtype=q.dtype)


def vect_inv(v):
    """Skew matrix acting as ``w -> v x w``."""
    v1, v2, v3 = v
    z = v1 * 0
    return np.array([[z, -v3, v2], [v3, z, -v1], [-v2, v1, z]],
                    dtype=object if not isinstance(v1, float) else float)


def sym(m):
    m = np.asarray(m)
    return (m + m.T) / 2 if m.dtype != object else (m + m.T) * Fraction(1, 2)


def skw(m):
    m = np.asarray(m)
    return (m - m.T) / 2 if m.dtype != object else (m - m.T) * Fraction(1, 2)


def xi(m):
    """``Xi m = m^T - tr(m) I``."""
    m = np.asarray(m)
    eye = np.eye(3, dtype=int).astype(m.dtype)
    return m.T - np.trace(m) * eye


def xi_inv(m):
    """``Xi^{-1} m = m^T - tr(m) I / 2``."""
    m = np.asarray(m)
    eye = np.eye(3, dtype=int).astype(m.dtype)
    half = Fraction(1, 2) if m.dtype == object else 0.5
    return m.T - half * np.trace(m) * eye


def cross_skew_check(a, b):
    """Both sides of ``a x b = -2 vect skw(a b^T)``."""
    a = np.asarray(a)
    b = np.asarray(b)
    left = np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]], dtype=a.dtype)
    right = -2 * vect(skw(np.outer(a, b)), tol=0 if a.dtype == object else 1e-12)
    return left, right


# ---------------------------------------------------------------------------
# K, S, S' and friends

def _cross_values(w: PolyForm, vec, out_values: ValueSpace, factor=1) -> PolyForm:
    """Replace each 3-vector value ``a`` by ``factor * (a x vec)``.

    ``vec`` is a list of three scalar 0-forms on the same R^n.
    """
    if w.values.dim != 3:
        raise ValueError(f"expected V or K values, got {w.values}")
    terms = {}
    for (I, a_comp, al), v in w.terms.items():
        for (i, j, kk), s in _EPS.items():
            if j != a_comp:
                continue
            # (a x vec)_i = eps_ijk a_j vec_k
            for (_, _, be), y in vec[kk].terms.items():
                key = (I, i, _add_alpha(al, be))
                terms[key] = terms.get(key, 0) + factor * s * v * y
    return PolyForm(w.n, w.k, out_values, terms)


def _position(n=3):
    return [PolyForm.coordinate(i, n) for i in range(n)]


def _unit_const(i, n=3, scale=1):
    return [PolyForm.constant(scale if j == i else 0, n) for j in range(3)]


def K_op(w: PolyForm) -> PolyForm:
    """Pointwise ``K_x v = 2 skw(x v^T)``; in axial coordinates ``v x x``."""
    if w.values is not V:
        raise ValueError("K acts on V-valued forms")
    return _cross_values(w, _position(w.n), K)


def K_prime_op(w: PolyForm) -> PolyForm:
    """Adjoint of K: ``K'_x q = -2 q x``."""
    if w.values is not K:
        raise ValueError("K' acts on K-valued forms")
    return _cross_values(w, _position(w.n), V, factor=-2)


def _apply_S(w, out_values, factor, frame=None):
    n = w.n
    total = PolyForm(n, w.k + 1, out_values)
    for i in range(n):
        col = frame[i] if frame is not None else [1 if j == i else 0 for j in range(3)]
        vec = [PolyForm.constant(col[j], n) for j in range(3)]
        total = total + wedge(PolyForm.dx(i, n=n),
                              _cross_values(w, vec, out_values, factor))
    return total


def S_op(w: PolyForm, frame=None) -> PolyForm:
    """Algebraic operator ``S = dK - Kd`` from V-valued k-forms to K-valued.

    ``frame`` (optional, n columns of length 3) replaces the coordinate
    vectors ``e_i`` when the form is expressed in non-Cartesian affine
    coordinates: ``S w = sum_i dt_i ^ K_{frame_i}[w]``.
    """
    if w.values is not V:
        raise ValueError("S acts on V-valued forms")
    if w.k >= w.n:
        raise ValueError("S_k is defined for k <= 2")
    return _apply_S(w, K, 1, frame)


def S_prime_op(w: PolyForm, frame=None) -> PolyForm:
    """``S' = dK' - K'd`` from K-valued k-forms to V-valued (k+1)-forms."""
    if w.values is not K:
        raise ValueError("S' acts on K-valued forms")
    if w.k >= w.n:
        raise ValueError("S'_k is defined for k <= 2")
    return _apply_S(w, V, -2, frame)


def S1_inv(w: PolyForm) -> PolyForm:
    """Inverse of S_1 by the explicit pointwise formula.

    ``(S1^{-1} w)(v1) . (v2 x v3) = 1/2 [vect w(v2,v3).v1 - vect w(v1,v2).v3
    + vect w(v1,v3).v2]`` evaluated on coordinate vectors.
    """
    if w.values is not K or w.k != 2 or w.n != 3:
        raise ValueError("S1_inv acts on K-valued 2-forms in R^3")
    half = Fraction(1, 2)

    def omega(i, j):
        # K-valued scalar polynomials of w(e_i, e_j) as list of 3 0-forms
        sign = 1
        if i == j:
            return [PolyForm.zero(3, 0, R)] * 3
        if i > j:
            i, j, sign = j, i, -1
        comps = []
        for c in range(3):
            comps.append(PolyForm(3, 0, R, {((), 0, a): sign * v
                                            for (I, cc, a), v in w.terms.items()
                                            if I == (i, j) and cc == c}))
        return comps

    terms = {}
    for a in range(3):          # argument v1 = e_a
        for i, (j, kk) in ((0, (1, 2)), (1, (2, 0)), (2, (0, 1))):
            # v2 x v3 = e_j x e_k = e_i, so the lhs is mu(e_a)_i
            val = omega(j, kk)[a] - omega(a, j)[kk] + omega(a, kk)[j]
            for (_, _, al), v in val.terms.items():
                key = ((a,), i, al)
                terms[key] = terms.get(key, 0) + half * v
    return PolyForm(3, 1, V, terms)


# ---------------------------------------------------------------------------
# matrix fields and identifications

class MatrixField:
    """Polynomial 3x3 matrix field, stored as an M-valued 0-form on R^3."""

    __slots__ = ("form",)

    def __init__(self, form: PolyForm):
        if form.values is not M or form.k != 0 or form.n != 3:
            raise ValueError("MatrixField wraps an M-valued 0-form on R^3")
        self.form = form

    @classmethod
    def from_entries(cls, entries):
        comps = []
        for i in range(3):
            for j in range(3):
                e = entries[i][j]
                comps.append(e if isinstance(e, PolyForm) else PolyForm.constant(e))
        return cls(PolyForm.from_components(comps, M))

    @classmethod
    def constant(cls, m):
        m = np.asarray(m, dtype=object)
        return cls.from_entries([[m[i, j] for j in range(3)] for i in range(3)])

    def entry(self, i, j) -> PolyForm:
        return self.form.component(3 * i + j)

    def entries(self):
        return [[self.entry(i, j) for j in range(3)] for i in range(3)]

    def __add__(self, other):
        return MatrixField(self.form + other.form)

    def __sub__(self, other):
        return MatrixField(self.form - other.form)

    def __mul__(self, s):
        return MatrixField(self.form * s)

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, MatrixField) and self.form == other.form

    def __hash__(self):
        return hash(self.form)

    def is_zero(self, tol=0):
        return self.form.is_zero(tol)

    @property
    def degree(self):
        return self.form.degree

    def transpose(self):
        e = self.entries()
        return MatrixField.from_entries([[e[j][i] for j in range(3)] for i in range(3)])

    def trace(self) -> PolyForm:
        return self.entry(0, 0) + self.entry(1, 1) + self.entry(2, 2)

    def evaluate(self, x):
        vals = self.form.evaluate(x)
        return np.array(vals, dtype=object).reshape(3, 3)

    def is_symmetric(self):
        return (self - self.transpose()).is_zero()

    def curl_rows(self):
        e = self.entries()
        out = []
        for row in e:
            out.append([row[2].diff(1) - row[1].diff(2),
                        row[0].diff(2) - row[2].diff(0),
                        row[1].diff(0) - row[0].diff(1)])
        return MatrixField.from_entries(out)

    def div_rows(self):
        """Row-wise divergence as a V-valued 0-form."""
        e = self.entries()
        comps = [e[i][0].diff(0) + e[i][1].diff(1) + e[i][2].diff(2) for i in range(3)]
        return PolyForm.from_components(comps, V)

    def xi(self):
        tr = self.trace()
        t = self.transpose().entries()
        return MatrixField.from_entries([[t[i][j] - tr if i == j else t[i][j]
                                          for j in range(3)] for i in range(3)])

    def xi_inv(self):
        tr = self.trace() * Fraction(1, 2)
        t = self.transpose().entries()
        return MatrixField.from_entries([[t[i][j] - tr if i == j else t[i][j]
                                          for j in range(3)] for i in range(3)])

    def sym(self):
        return (self + self.transpose()) * Fraction(1, 2)

    def skw(self):
        return (self - self.transpose()) * Fraction(1, 2)


def grad_field(u: PolyForm) -> MatrixField:
    """Row-wise gradient of a V-valued 0-form: ``(grad u)_ij = d_j u_i``."""
    comps = [u.component(i) for i in range(3)]
    return MatrixField.from_entries([[comps[i].diff(j) for j in range(3)]
                                     for i in range(3)])


def eps_field(u: PolyForm) -> MatrixField:
    return grad_field(u).sym()


def skew_field(u: PolyForm) -> MatrixField:
    """Skew field ``vect_inv(u)`` of a V-valued 0-form."""
    a = [u.component(i) for i in range(3)]
    z = PolyForm.zero()
    return MatrixField.from_entries([[z, -a[2], a[1]], [a[2], z, -a[0]],
                                     [-a[1], a[0], z]])


def J_op(F: MatrixField) -> MatrixField:
    """``J F = curl Xi^{-1} curl F`` with row-wise curl."""
    return F.curl_rows().xi_inv().curl_rows()


def _matrix_of(F):
    if isinstance(F, MatrixField):
        return F.entries()
    m = np.asarray(F, dtype=object)
    return [[PolyForm.constant(m[i, j]) for j in range(3)] for i in range(3)]


def matrix_proxy_1(F, values: ValueSpace = K) -> PolyForm:
    """1-form ``v -> vect_inv(F v)`` (values K) or ``v -> F v`` (values V)."""
    if values not in (V, K):
        raise ValueError("matrix_proxy_1 produces V- or K-valued forms")
    e = _matrix_of(F)
    terms = {}
    for c in range(3):
        for j in range(3):
            for (_, _, a), v in e[c][j].terms.items():
                terms[((j,), c, a)] = terms.get(((j,), c, a), 0) + v
    return PolyForm(3, 1, values, terms)


def matrix_proxy_2(F, values: ValueSpace = V) -> PolyForm:
    """2-form ``(v1, v2) -> F (v1 x v2)`` (values V) or its vect_inv (values K)."""
    if values not in (V, K):
        raise ValueError("matrix_proxy_2 produces V- or K-valued forms")
    e = _matrix_of(F)
    terms = {}
    for c in range(3):
        for i in range(3):
            I, s = _CROSS_2FORM[i]
            for (_, _, a), v in e[c][i].terms.items():
                terms[(I, c, a)] = terms.get((I, c, a), 0) + s * v
    return PolyForm(3, 2, values, terms)


def matrix_from_proxy_1(w: PolyForm) -> MatrixField:
    if w.k != 1 or w.values not in (V, K) or w.n != 3:
        raise ValueError("expected a V- or K-valued 1-form on R^3")
    entries = [[{} for _ in range(3)] for _ in range(3)]
    for (I, c, a), v in w.terms.items():
        entries[c][I[0]][a] = v
    return MatrixField.from_entries([[PolyForm(3, 0, R, {((), 0, a): v for a, v
                                                         in entries[i][j].items()})
                                      for j in range(3)] for i in range(3)])


def matrix_from_proxy_2(w: PolyForm) -> MatrixField:
    if w.k != 2 or w.values not in (V, K) or w.n != 3:
        raise ValueError("expected a V- or K-valued 2-form on R^3")
    inv = {I: (i, s) for i, (I, s) in _CROSS_2FORM.items()}
    entries = [[{} for _ in range(3)] for _ in range(3)]
    for (I, c, a), v in w.terms.items():
        i, s = inv[I]
        entries[c][i][a] = entries[c][i].get(a, 0) + s * v
    return MatrixField.from_entries([[PolyForm(3, 0, R, {((), 0, a): v for a, v
                                                         in entries[i][j].items()})
                                      for j in range(3)] for i in range(3)])


def three_form_value(w: PolyForm) -> PolyForm:
    """Proxy of a 3-form on R^3: coefficient of dx0^dx1^dx2 as a 0-form."""
    if w.k != 3 or w.n != 3:
        raise ValueError("expected a 3-form on R^3")
    return PolyForm(3, 0, w.values, {((), c, a): v for (_, c, a), v in w.terms.items()})


# ---------------------------------------------------------------------------
# random inputs

def _random_coef(rng, exact=True):
    if exact:
        return Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 5)))
    return float(rng.standard_normal())


def random_polyform(rng, k, values=R, degree=2, n=3, exact=True, density=1.0):
    """Random polynomial form of total degree <= ``degree``."""
    terms = {}
    alphas = [a for a in itertools.product(range(degree + 1), repeat=n)
              if sum(a) <= degree]
    for I in itertools.combinations(range(n), k):
        for c in range(values.dim):
            for a in alphas:
                if density >= 1.0 or rng.random() < density:
                    terms[(I, c, a)] = _random_coef(rng, exact)
    return PolyForm(n, k, values, terms)


def random_matrix_field(rng, degree=2, exact=True, symmetric=False):
    F = MatrixField(random_polyform(rng, 0, M, degree, exact=exact))
    return F.sym() if symmetric else F


def monomials(n, degree, homogeneous=False) -> list:
    """Exponent tuples in n variables of total degree <= degree (or == degree)."""
    out = []
    for total in ([degree] if homogeneous else range(degree + 1)):
        if total < 0:
            continue
        for a in itertools.product(range(total + 1), repeat=n):
            if sum(a) == total:
                out.append(a)
    return sorted(out, key=lambda a: (sum(a), tuple(-x for x in a)))


def polynomial_form_basis(n, k, degree, values=R, homogeneous=False):
    """Monomial basis x^alpha dx_I e_c of P_degree Lambda^k(R^n; values)."""
    if degree < 0:
        return []
    basis = []
    for c in range(values.dim):
        for I in itertools.combinations(range(n), k):
            for a in monomials(n, degree, homogeneous):
                basis.append(PolyForm(n, k, values, {(I, c, a): 1}))
    return basis


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(float(x))


def iter_terms(forms: Iterable[PolyForm]):
    for f in forms:
        yield from f.terms.items()
