"""Finite element spaces of polynomial differential forms on tetrahedra.

Local spaces are ``P_r Lambda^k``, ``P_r^+ Lambda^k = P_r Lambda^k + kappa
P_r Lambda^{k+1}`` and two reduced spaces built from ``P_1^+ Lambda^1(V)``
and ``P_1 Lambda^2(V)``.  Degrees of freedom are moments
``int_f omega ^ zeta`` over the sub-simplices ``f`` of a tetrahedron.

Every cell is handled in its *sorted frame*: the affine map from the
reference tetrahedron sends reference vertex ``j`` to the cell vertex with
the ``j``-th smallest global index.  Sub-entities are then parametrized in
ascending global order on both sides of a shared entity, so the moment
functionals agree exactly and all inter-element orientation signs are +1.
The determinant of the sorted-frame map may be negative; integrals use its
absolute value and pushforwards carry the sign.

Local bases are computed once by inverting the moment (Vandermonde) matrix
in exact rational arithmetic.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np

from . import exact
from .mesh import LOCAL_ENTITIES, TetMesh
from .polyform import (K, R, V, PolyForm, ValueSpace, ext_d, koszul, monomials,
                       polynomial_form_basis, wedge)
from .quadrature import simplex_rule

__all__ = [
    "SpaceSpec",
    "LocalDof",
    "LocalBasis",
    "DofMap",
    "FESpace",
    "local_dimension",
    "build_local_basis",
    "build_dof_map",
    "interpolate",
    "evaluate_field",
    "plus_dimension",
    "whitney_spec",
]

FAMILIES = ("P", "Pplus", "P1minus_plus_L1", "P1minus_L2")
REDUCED = {"P1minus_plus_L1": (1, 1, V), "P1minus_L2": (1, 2, V)}

# reference vertex i > 0 is e_{i-1}
REF_VERTICES = ((Fraction(0),) * 3,) + tuple(
    tuple(Fraction(int(j == i)) for j in range(3)) for i in range(3))

_LOCK = threading.RLock()


# ---------------------------------------------------------------------------
# specs

@dataclass(frozen=True)
class SpaceSpec:
    """Family, polynomial degree, form degree and value space of a local space.

    ``family`` is one of ``P``, ``Pplus`` (``P_r^+``), ``P1minus_plus_L1``
    (the 48-dimensional reduced subspace of ``P_1^+ Lambda^1(V)``) or
    ``P1minus_L2`` (the 24-dimensional reduced subspace of
    ``P_1 Lambda^2(V)``).
    """

    family: str
    r: int
    k: int
    values: ValueSpace = R

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown space family {self.family!r}; "
                             f"expected one of {FAMILIES}")
        if int(self.r) != self.r or self.r < 0:
            raise ValueError(f"polynomial degree must be >= 0, got {self.r}")
        if not 0 <= self.k <= 3:
            raise ValueError(f"form degree must be 0..3, got {self.k}")
        if self.values not in (R, V, K):
            raise ValueError(f"values must be R, V or K, got {self.values}")
        if self.family in REDUCED and (self.r, self.k, self.values) != REDUCED[self.family]:
            r, k, x = REDUCED[self.family]
            raise ValueError(f"{self.family} is only defined for r={r}, k={k}, "
                             f"values={x.value}")

    @property
    def reduced(self) -> bool:
        return self.family in REDUCED

    @property
    def scalar(self) -> "SpaceSpec":
        if self.reduced:
            raise ValueError("reduced spaces have no scalar counterpart")
        return SpaceSpec(self.family, self.r, self.k, R)

    def __str__(self):
        names = {"P": f"P{self.r}", "Pplus": f"P{self.r}+",
                 "P1minus_plus_L1": "P1-+", "P1minus_L2": "P1-"}
        return f"{names[self.family]}L{self.k}({self.values.value})"


def whitney_spec(k: int, values=R) -> SpaceSpec:
    return SpaceSpec("Pplus", 0, k, values)


def plus_dimension(r: int, k: int, n: int = 3) -> int:
    """Closed form ``dim P_r^+ Lambda^k(R^n)``."""
    return comb(r + n + 1, r + k + 1) * comb(r + k, k)


# ---------------------------------------------------------------------------
# scalar spanning families

def _coef_vector(forms, keys=None):
    if keys is None:
        keys = sorted({key for f in forms for key in f.terms})
    index = {key: i for i, key in enumerate(keys)}
    mat = np.zeros((len(keys), len(forms)), dtype=object)
    for j, f in enumerate(forms):
        for key, v in f.terms.items():
            mat[index[key], j] = v
    return mat, keys


def _independent(forms):
    if not forms:
        return []
    mat, _ = _coef_vector(forms)
    return [forms[j] for j in exact.pivot_columns(mat)]


@lru_cache(maxsize=None)
def poly_basis(n: int, m: int, s: int) -> tuple:
    """Monomial basis of P_s Lambda^m(R^n), empty for s < 0."""
    if s < 0 or m > n:
        return ()
    return tuple(polynomial_form_basis(n, m, s))


@lru_cache(maxsize=None)
def plus_basis(n: int, m: int, s: int) -> tuple:
    """Basis of P_s^+ Lambda^m(R^n): monomials first, then Koszul extras.

    ``P_s^+ Lambda^0 = P_{s+1} Lambda^0``, which also gives ``P_0`` for
    ``s = -1``.  For ``m >= 1`` and ``s < 0`` the space is trivial.
    """
    if m == 0:
        return poly_basis(n, 0, s + 1)
    if s < 0 or m > n:
        return ()
    base = list(poly_basis(n, m, s))
    extra = []
    if m + 1 <= n:
        extra = [koszul(f) for f in polynomial_form_basis(n, m + 1, s, homogeneous=True)]
    return tuple(_independent(base + extra))


def scalar_family(spec: SpaceSpec) -> tuple:
    """Scalar spanning family on R^3 whose X-tensor contains the space."""
    if spec.family == "P":
        return poly_basis(3, spec.k, spec.r)
    if spec.family in ("Pplus", "P1minus_plus_L1"):
        return plus_basis(3, spec.k, spec.r)
    return poly_basis(3, 2, 1)


def _test_forms(family: str, r: int, k: int, d: int) -> tuple:
    """Scalar test forms on the reference d-simplex for the moment DOFs."""
    m = d - k
    if m < 0:
        return ()
    if family == "P":
        return plus_basis(d, m, r - d - 1 + k)
    return poly_basis(d, m, r - d + k)


# ---------------------------------------------------------------------------
# degrees of freedom

@dataclass(frozen=True)
class LocalDof:
    """Moment functional ``omega -> int_f psi^* omega ^ test``.

    ``d`` and ``entity`` identify the sub-simplex in the sorted frame; the
    parametrization ``psi`` runs through its vertices in ascending order.
    ``test`` is a form on R^d (scalar or X-valued).
    """

    d: int
    entity: int
    test: PolyForm


def entity_map(d: int, e: int, B=None, origin=None):
    """Affine parametrization of a reference sub-simplex, optionally mapped by B."""
    verts = LOCAL_ENTITIES[d][e]
    v0 = REF_VERTICES[verts[0]]
    cols = [[REF_VERTICES[v][i] - v0[i] for v in verts[1:]] for i in range(3)]
    org = list(v0)
    if B is not None:
        cols = [[sum(B[i][l] * cols[l][j] for l in range(3)) for j in range(d)]
                for i in range(3)]
        org = [sum(B[i][l] * v0[l] for l in range(3)) + (origin[i] if origin is not None
                                                          else 0) for i in range(3)]
    return org, cols


def _tensor_test(zeta: PolyForm, c: int, values: ValueSpace) -> PolyForm:
    if values is R:
        return zeta
    return PolyForm(zeta.n, zeta.k, values,
                    {(I, c, a): v for (I, _, a), v in zeta.terms.items()})


def _vector_test(n, k, values, comps):
    """X-valued form on R^n from per-component scalar forms."""
    terms = {}
    for c, f in enumerate(comps):
        for (I, _, a), v in f.terms.items():
            terms[(I, c, a)] = terms.get((I, c, a), 0) + v
    return PolyForm(n, k, values, terms)


def _cross(a, b):
    return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0]]


def _face_vectors(e, B):
    _, A = entity_map(2, e, B)
    return [[A[i][j] for i in range(3)] for j in range(2)]


def _skw_face_tests(e, B, k):
    """Face tests built from ``q -> b x q``, b = e_0, e_1, e_2.

    For k = 1 this is the 1-form ``u -> b x (A u)``; for k = 2 the 0-form
    ``t -> b x (A t)`` (the non-constant part of ``P_{1,skw} Lambda^0``).
    """
    a = _face_vectors(e, B)
    out = []
    for b in range(3):
        bv = [int(i == b) for i in range(3)]
        cols = [_cross(bv, a[j]) for j in range(2)]  # b x A_j
        comps = []
        for c in range(3):
            if k == 1:
                f = sum((PolyForm.monomial((0, 0), (j,), n=2, coef=cols[j][c])
                         for j in range(2)), PolyForm(2, 1))
            else:
                f = sum((PolyForm.monomial(tuple(int(i == j) for i in range(2)), (), n=2,
                                           coef=cols[j][c]) for j in range(2)),
                        PolyForm(2, 0))
            comps.append(f)
        out.append(_vector_test(2, 1 if k == 1 else 0, V, comps))
    return out


def _sym_face_tests(e, B):
    """Face 1-form tests ``u -> M A u`` with M in span{a1a1^T, a1a2^T+a2a1^T, a2a2^T}."""
    a = _face_vectors(e, B)
    mats = []
    for p, q in ((0, 0), (0, 1), (1, 1)):
        M = [[a[p][i] * a[q][j] + (a[q][i] * a[p][j] if p != q else 0)
              for j in range(3)] for i in range(3)]
        mats.append(M)
    out = []
    for M in mats:
        comps = []
        for c in range(3):
            f = PolyForm(2, 1)
            for j in range(2):
                coef = sum(M[c][l] * a[j][l] for l in range(3))
                f = f + PolyForm.monomial((0, 0), (j,), n=2, coef=coef)
            comps.append(f)
        out.append(_vector_test(2, 1, V, comps))
    return out


def element_dofs(spec: SpaceSpec, B=None, kind=None) -> list:
    """Ordered local DOFs (entity-major, then value component, then test).

    ``B`` (exact 3x3, sorted frame) is needed for the reduced families, whose
    face tests depend on the face geometry.  ``kind`` selects the full
    ``P_1^+ Lambda^1(V)`` DOF set split into edge/sym/skw blocks (internal).
    """
    dofs = []
    if not spec.reduced and kind is None:
        for d in range(spec.k, 4):
            tests = _test_forms(spec.family, spec.r, spec.k, d)
            for e in range(len(LOCAL_ENTITIES[d])):
                for c in range(spec.values.dim):
                    for z in tests:
                        dofs.append(LocalDof(d, e, _tensor_test(z, c, spec.values)))
        return dofs
    if B is None:
        B = [[Fraction(int(i == j)) for j in range(3)] for i in range(3)]
    if spec.family == "P1minus_L2":
        for e in range(4):
            for c in range(3):
                dofs.append(LocalDof(2, e, _tensor_test(PolyForm.constant(1, n=2), c, V)))
            for z in _skw_face_tests(e, B, 2):
                dofs.append(LocalDof(2, e, z))
        return dofs
    # P_1^+ Lambda^1(V): edges, then per face (sym block if kind == 'full', skw)
    edge_tests = poly_basis(1, 0, 1)
    for e in range(6):
        for c in range(3):
            for z in edge_tests:
                dofs.append(LocalDof(1, e, _tensor_test(z, c, V)))
    for e in range(4):
        if kind == "full":
            for z in _sym_face_tests(e, B):
                dofs.append(LocalDof(2, e, z))
        for z in _skw_face_tests(e, B, 1):
            dofs.append(LocalDof(2, e, z))
    return dofs


_PULL_CACHE: dict = {}


def _pulled(form_key, form: PolyForm, d: int, e: int):
    key = (form_key, d, e)
    out = _PULL_CACHE.get(key)
    if out is None:
        org, A = entity_map(d, e)
        out = form.pullback(org, A)
        _PULL_CACHE[key] = out
    return out


def dof_matrix(dofs, forms, keys=None) -> np.ndarray:
    """Exact matrix ``[DOF_i(form_j)]`` on the reference tetrahedron."""
    mat = np.zeros((len(dofs), len(forms)), dtype=object)
    for j, f in enumerate(forms):
        fk = keys[j] if keys is not None else None
        for i, dof in enumerate(dofs):
            if f.k > dof.d:
                continue
            if fk is None:
                org, A = entity_map(dof.d, dof.entity)
                p = f.pullback(org, A)
            else:
                p = _pulled(fk, f, dof.d, dof.entity)
            if p.k + dof.test.k != dof.d:
                continue
            mat[i, j] = wedge(p, dof.test).integrate_simplex()[0]
    return mat


def _scalar_dof_matrix(dofs, family, family_tag):
    """DOF matrix against the scalar family tensored with the value space.

    Columns are ordered ``c * n_family + s``.  Each DOF test must have a
    single value component or be scalar.
    """
    ns = len(family)
    dim = max((d.test.values.dim for d in dofs), default=1)
    mat = np.zeros((len(dofs), dim * ns), dtype=object)
    weight = dofs[0].test.values.weight if dofs else 1
    for i, dof in enumerate(dofs):
        comps = sorted({c for (_, c, _) in dof.test.terms})
        for c in comps:
            z = dof.test.component(c) if dof.test.values is not R else dof.test
            for s, f in enumerate(family):
                if f.k > dof.d:
                    continue
                p = _pulled((family_tag, s), f, dof.d, dof.entity)
                if p.k + z.k != dof.d:
                    continue
                mat[i, c * ns + s] = weight * wedge(p, z).integrate_simplex()[0]
    return mat


# ---------------------------------------------------------------------------
# local bases

def _family_tag(spec):
    fam = "Pplus" if spec.family == "P1minus_plus_L1" else spec.family
    if spec.family == "P1minus_L2":
        fam = "P"
    return (fam, spec.r, spec.k)


@dataclass
class LocalBasis:
    """Dual basis of a local space on the reference tetrahedron.

    Shape function ``j`` is ``sum_{c,s} coeffs[c*ns+s, j] family[s] e_c``.

    Attributes
    ----------
    spec : SpaceSpec
    dofs : list of LocalDof
    family : tuple of scalar PolyForms on R^3
    coeffs : (dim*ns, n_local) exact object array
    """

    spec: SpaceSpec
    dofs: list
    family: tuple
    coeffs: np.ndarray
    _float: np.ndarray = field(default=None, repr=False)
    _shapes: list = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return self.coeffs.shape[1]

    @property
    def values(self) -> ValueSpace:
        return self.spec.values

    @property
    def fcoeffs(self) -> np.ndarray:
        if self._float is None:
            self._float = self.coeffs.astype(float)
        return self._float

    def descriptors(self):
        """(entity dimension, entity index, index within the entity) per DOF."""
        out, seen = [], {}
        for dof in self.dofs:
            key = (dof.d, dof.entity)
            out.append((dof.d, dof.entity, seen.get(key, 0)))
            seen[key] = seen.get(key, 0) + 1
        return out

    @property
    def shapes(self) -> list:
        if self._shapes is None:
            ns = len(self.family)
            dim = self.values.dim
            out = []
            for j in range(self.dimension):
                terms = {}
                for c in range(dim):
                    for s in range(ns):
                        a = self.coeffs[c * ns + s, j]
                        if a == 0:
                            continue
                        for (I, _, al), v in self.family[s].terms.items():
                            key = (I, c, al)
                            terms[key] = terms.get(key, 0) + a * v
                out.append(PolyForm(3, self.spec.k, self.values, terms))
            self._shapes = out
        return self._shapes

    def tabulate(self, points, derivative=False) -> np.ndarray:
        """Reference shape values (or their d) at points.

        Returns an array (n_local, n_points, n_I, dim) of form coefficients
        in the sorted index order of ``itertools.combinations``.
        """
        vals = _tabulate_family(_family_tag(self.spec), self.family, points, derivative)
        ns = len(self.family)
        C = self.fcoeffs.reshape(self.values.dim, ns, -1)
        return np.einsum("csj,sqi->jqic", C, vals)


_TAB_CACHE: dict = {}


def _compile(forms, n=3):
    k = forms[0].k if forms else 0
    Is = list(itertools.combinations(range(n), k))
    deg = max((f.degree for f in forms), default=0)
    monos = monomials(n, max(deg, 0))
    mi = {a: i for i, a in enumerate(monos)}
    ii = {I: i for i, I in enumerate(Is)}
    coef = np.zeros((len(forms), len(Is), len(monos)))
    for s, f in enumerate(forms):
        for (I, _, a), v in f.terms.items():
            coef[s, ii[I], mi[a]] += float(v)
    return np.array(monos, dtype=int).reshape(len(monos), n), coef


def _tabulate_family(tag, family, points, derivative):
    points = np.asarray(points, dtype=float)
    key = (tag, derivative)
    comp = _TAB_CACHE.get(key)
    if comp is None:
        forms = [ext_d(f) for f in family] if derivative else list(family)
        comp = _compile(forms)
        _TAB_CACHE[key] = comp
    monos, coef = comp
    mv = np.prod(points[:, None, :] ** monos[None, :, :], axis=2)  # (Q, nm)
    return np.einsum("sim,qm->sqi", coef, mv)


_BASIS_CACHE: dict = {}


def _geometry_key(B):
    return tuple(Fraction(x) for row in B for x in row)


def build_local_basis(spec: SpaceSpec, B=None) -> LocalBasis:
    """Dual basis on the reference tetrahedron (cached).

    ``B`` is the exact sorted-frame Jacobian; only reduced families use it.
    """
    key = (spec, _geometry_key(B) if (spec.reduced and B is not None) else None)
    with _LOCK:
        hit = _BASIS_CACHE.get(key)
        if hit is not None:
            return hit
        if spec.reduced:
            basis = _build_reduced(spec, B)
        else:
            basis = _build_standard(spec)
        _BASIS_CACHE[key] = basis
        return basis


def _build_standard(spec):
    family = scalar_family(spec)
    sdofs = element_dofs(spec.scalar)
    if len(sdofs) != len(family):
        raise RuntimeError(f"{spec}: {len(sdofs)} DOFs for a {len(family)}-dim space")
    vmat = _scalar_dof_matrix(sdofs, family, _family_tag(spec))
    try:
        cinv = exact.inverse(vmat)
    except ZeroDivisionError as exc:
        raise RuntimeError(f"{spec}: singular moment matrix") from exc
    dim, ns = spec.values.dim, len(family)
    w = Fraction(1, spec.values.weight)
    # tensor DOF order: entity-major, then component, then scalar test
    dofs = element_dofs(spec)
    coeffs = np.zeros((dim * ns, dim * ns), dtype=object)
    col = 0
    groups = []
    for i, dof in enumerate(sdofs):
        if groups and groups[-1][0] == (dof.d, dof.entity):
            groups[-1][1].append(i)
        else:
            groups.append(((dof.d, dof.entity), [i]))
    for _, idx in groups:
        for c in range(dim):
            for i in idx:
                coeffs[c * ns:(c + 1) * ns, col] = cinv[:, i] * w
                col += 1
    return LocalBasis(spec, dofs, family, coeffs)


def _reduced_parts(B):
    """Family coordinates of the pieces of the reduced spaces for geometry B.

    Returns the 60x48 basis of ``P_{1,-}^+ Lambda^1(V)``, the 36x24 basis of
    ``P_{1,-} Lambda^2(V)`` and the corresponding DOF lists.
    """
    l1 = SpaceSpec("P1minus_plus_L1", 1, 1, V)
    fam1 = scalar_family(l1)
    ns1 = len(fam1)
    full = element_dofs(l1, B, kind="full")           # 36 edge + per face 3 sym + 3 skw
    vfull = _scalar_dof_matrix_mixed(full, fam1, _family_tag(l1))
    dual = exact.inverse(vfull)
    skw_rows = [i for i in range(36, 60) if (i - 36) % 6 >= 3]
    n_p1 = len(poly_basis(3, 1, 1))
    span = np.zeros((3 * ns1, 48), dtype=object)
    col = 0
    for c in range(3):
        for s in range(n_p1):
            span[c * ns1 + s, col] = 1
            col += 1
    span[:, 36:] = dual[:, skw_rows]
    dofs1 = [full[i] for i in range(36)] + [full[i] for i in skw_rows]
    vred = vfull[list(range(36)) + skw_rows] @ span
    basis1 = span @ exact.inverse(vred)

    l2 = SpaceSpec("P1minus_L2", 1, 2, V)
    fam2 = scalar_family(l2)
    ns2 = len(fam2)
    dmat = _d_matrix(fam1, fam2)                       # (ns2, ns1)
    keys = {next(iter(f.terms))[::2]: i for i, f in enumerate(fam2)}
    whit = [f for f in plus_basis(3, 2, 0)]
    span2 = np.zeros((3 * ns2, 24), dtype=object)
    col = 0
    for c in range(3):
        for f in whit:
            for (I, _, a), v in f.terms.items():
                span2[c * ns2 + keys[(I, a)], col] += v
            col += 1
    bubbles = dual[:, skw_rows]
    for j in range(12):
        for c in range(3):
            span2[c * ns2:(c + 1) * ns2, 12 + j] = dmat @ bubbles[c * ns1:(c + 1) * ns1, j]
    dofs2 = element_dofs(l2, B)
    v2 = _scalar_dof_matrix_mixed(dofs2, fam2, _family_tag(l2))
    basis2 = span2 @ exact.inverse(v2 @ span2)
    return (fam1, dofs1, basis1), (fam2, dofs2, basis2), dict(
        vfull=vfull, dual=dual, span1=span, span2=span2, dmat=dmat, whitney=span2[:, :12])


def _scalar_dof_matrix_mixed(dofs, family, tag):
    """Like ``_scalar_dof_matrix`` but for tests mixing value components."""
    ns = len(family)
    mat = np.zeros((len(dofs), 3 * ns), dtype=object)
    for i, dof in enumerate(dofs):
        for c in range(3):
            z = dof.test.component(c)
            if not z.terms:
                continue
            for s, f in enumerate(family):
                p = _pulled((tag, s), f, dof.d, dof.entity)
                if p.k + z.k != dof.d:
                    continue
                mat[i, c * ns + s] = wedge(p, z).integrate_simplex()[0]
    return mat


def _d_matrix(src, dst):
    """Exact matrix of d from span(src) into the monomial family dst."""
    keys = {next(iter(f.terms))[::2]: i for i, f in enumerate(dst)}
    mat = np.zeros((len(dst), len(src)), dtype=object)
    for j, f in enumerate(src):
        for (I, _, a), v in ext_d(f).terms.items():
            mat[keys[(I, a)], j] += v
    return mat


_REDUCED_CACHE: dict = {}


def reduced_parts(B=None):
    if B is None:
        B = [[Fraction(int(i == j)) for j in range(3)] for i in range(3)]
    key = _geometry_key(B)
    with _LOCK:
        if key not in _REDUCED_CACHE:
            _REDUCED_CACHE[key] = _reduced_parts(B)
        return _REDUCED_CACHE[key]


def _build_reduced(spec, B):
    p1, p2, _ = reduced_parts(B)
    fam, dofs, coeffs = p1 if spec.family == "P1minus_plus_L1" else p2
    return LocalBasis(spec, dofs, fam, coeffs)


def local_dimension(spec: SpaceSpec) -> int:
    """Dimension of the local space on one tetrahedron."""
    if spec.family == "P1minus_plus_L1":
        return 48
    if spec.family == "P1minus_L2":
        return 24
    return len(scalar_family(spec)) * spec.values.dim


# ---------------------------------------------------------------------------
# global numbering

@dataclass
class DofMap:
    """Global numbering of a space on a mesh.

    DOFs of entity dimension d are grouped by global entity; ``cell_dofs``
    lists, per cell, the global index of each local DOF and ``cell_signs``
    the orientation sign (always +1 in the sorted frame).
    """

    cell_dofs: np.ndarray
    cell_signs: np.ndarray
    n_dofs: int
    entity_dofs: dict
    offsets: dict


def _entity_lookup(mesh: TetMesh, d: int, sorted_tets: np.ndarray):
    """Global entity index for each (cell, local entity) in the sorted frame."""
    nv = mesh.n_vertices
    local = LOCAL_ENTITIES[d]
    if d == 0:
        return sorted_tets
    if d == 3:
        return np.arange(len(sorted_tets))[:, None]
    table = mesh.edges if d == 1 else mesh.faces
    enc = np.zeros(len(table), dtype=np.int64)
    for j in range(d + 1):
        enc = enc * nv + table[:, j]
    order = np.argsort(enc)
    out = np.empty((len(sorted_tets), len(local)), dtype=np.int64)
    for e, verts in enumerate(local):
        key = np.zeros(len(sorted_tets), dtype=np.int64)
        for v in verts:
            key = key * nv + sorted_tets[:, v]
        pos = np.searchsorted(enc, key, sorter=order)
        out[:, e] = order[pos]
    return out


def build_dof_map(mesh: TetMesh, spec: SpaceSpec) -> DofMap:
    """Global DOF numbering; entity DOFs are shared by all incident cells."""
    desc = element_dofs(spec) if not spec.reduced else \
        build_local_basis(spec).dofs
    stets = np.sort(mesh.tets, axis=1)
    per = {}
    for dof in desc:
        per.setdefault(dof.d, {}).setdefault(dof.entity, 0)
        per[dof.d][dof.entity] += 1
    counts = {d: next(iter(v.values())) for d, v in per.items()}
    offsets, total = {}, 0
    for d in range(4):
        offsets[d] = total
        total += mesh.n_entities(d) * counts.get(d, 0)
    lookups = {d: _entity_lookup(mesh, d, stets) for d in counts}
    cell_dofs = np.empty((mesh.n_cells, len(desc)), dtype=np.int64)
    seen = {}
    for i, dof in enumerate(desc):
        key = (dof.d, dof.entity)
        sub = seen.get(key, 0)
        seen[key] = sub + 1
        ent = lookups[dof.d][:, dof.entity]
        cell_dofs[:, i] = offsets[dof.d] + ent * counts[dof.d] + sub
    entity_dofs = {d: offsets[d] + np.arange(mesh.n_entities(d) * n).reshape(-1, n)
                   for d, n in counts.items()}
    return DofMap(cell_dofs, np.ones_like(cell_dofs), total, entity_dofs, offsets)


# ---------------------------------------------------------------------------
# pushforward helpers

_COMBOS = {k: list(itertools.combinations(range(3), k)) for k in range(4)}


def pushforward_matrices(Binv: np.ndarray, k: int) -> np.ndarray:
    """(..., n_I, n_I) matrices P with phys_I = sum_J ref_J P[J, I].

    For ``x = B xhat + b`` the reference form ``dxhat_J`` equals
    ``sum_I det(Binv[J, I]) dx_I``.
    """
    combos = _COMBOS[k]
    shape = Binv.shape[:-2]
    P = np.empty(shape + (len(combos), len(combos)))
    for a, J in enumerate(combos):
        for b, I in enumerate(combos):
            if k == 0:
                P[..., a, b] = 1.0
            else:
                P[..., a, b] = np.linalg.det(Binv[..., list(J), :][..., :, list(I)])
    return P


def proxy_matrix(k: int) -> np.ndarray:
    """(n_I, p) map from form coefficients to the vector/scalar proxy."""
    if k in (0, 3):
        return np.ones((1, 1))
    if k == 1:
        return np.eye(3)
    P = np.zeros((3, 3))
    P[2, 0] = 1.0     # dx1^dx2 -> first proxy entry
    P[1, 1] = -1.0    # dx0^dx2
    P[0, 2] = 1.0     # dx0^dx1
    return P


# ---------------------------------------------------------------------------
# global spaces

class FESpace:
    """A finite element space on a mesh (local bases plus global numbering).

    Parameters
    ----------
    spec : SpaceSpec
    mesh : TetMesh
    """

    def __init__(self, spec: SpaceSpec, mesh: TetMesh):
        self.spec = spec
        self.mesh = mesh
        self.sorted_tets = np.sort(mesh.tets, axis=1)
        p = mesh.vertices[self.sorted_tets]
        self.B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=2)
        self.b = p[:, 0].copy()
        self.detB = np.linalg.det(self.B)
        self.Binv = np.linalg.inv(self.B)
        self.dofmap = build_dof_map(mesh, spec)
        if spec.reduced:
            keys, self.bases = {}, []
            self.cell_group = np.zeros(mesh.n_cells, dtype=np.int64)
            for c in range(mesh.n_cells):
                Bx = self.exact_B(c)
                gk = _geometry_key(Bx)
                if gk not in keys:
                    keys[gk] = len(self.bases)
                    self.bases.append(build_local_basis(spec, Bx))
                self.cell_group[c] = keys[gk]
        else:
            self.bases = [build_local_basis(spec)]
            self.cell_group = np.zeros(mesh.n_cells, dtype=np.int64)

    @property
    def dim(self) -> int:
        return self.dofmap.n_dofs

    @property
    def local_dim(self) -> int:
        return self.bases[0].dimension

    def exact_B(self, cell: int):
        vs = [self.mesh.exact_vertices[v] for v in self.sorted_tets[cell]]
        return [[vs[j + 1][i] - vs[0][i] for j in range(3)] for i in range(3)]

    def exact_origin(self, cell: int):
        return list(self.mesh.exact_vertices[self.sorted_tets[cell][0]])

    def basis(self, cell: int) -> LocalBasis:
        return self.bases[self.cell_group[cell]]

    def groups(self):
        """Yield (local basis, cell indices) for cells sharing a basis."""
        for g, basis in enumerate(self.bases):
            yield basis, np.nonzero(self.cell_group == g)[0]

    def physical_values(self, cells, points, derivative=False, basis=None):
        """Proxy values of local shapes at reference points on given cells.

        Returns (n_cells, n_local, n_points, dim, p) where p = 1 for
        0- and 3-forms and 3 for 1- and 2-forms.  For ``derivative=True``
        the values of d(shape) are returned.
        """
        cells = np.asarray(cells)
        basis = basis or self.basis(int(cells[0]))
        k = self.spec.k + (1 if derivative else 0)
        ref = basis.tabulate(points, derivative)             # (j, q, I, c)
        P = pushforward_matrices(self.Binv[cells], k)        # (n, J, I)
        Pp = P @ proxy_matrix(k)                             # (n, J, p)
        nj, nq, nJ, nc = ref.shape
        flat = ref.transpose(2, 0, 1, 3).reshape(nJ, -1)     # (J, j*q*c)
        phys = np.einsum("nJp,Jm->nmp", Pp, flat, optimize=True)
        return phys.reshape(len(cells), nj, nq, nc, -1)

    def physical_points(self, cells, points):
        return np.einsum("nij,qj->nqi", self.B[cells], points) + self.b[cells][:, None, :]

    def to_reference(self, cell, x):
        return self.Binv[cell] @ (np.asarray(x, float) - self.b[cell])


# ---------------------------------------------------------------------------
# interpolation

def _dof_value_exact(form: PolyForm, dof: LocalDof, B, origin):
    org, A = entity_map(dof.d, dof.entity, B, origin)
    p = form.pullback(org, A)
    return wedge(p, dof.test).integrate_simplex()[0]


def _form_coeff_arrays(test: PolyForm, pts):
    """Evaluate a form on R^d at points -> (Q, n_J, dim)."""
    d = test.n
    combos = list(itertools.combinations(range(d), test.k))
    ji = {J: i for i, J in enumerate(combos)}
    out = np.zeros((len(pts), len(combos), test.values.dim))
    for (J, c, a), v in test.terms.items():
        mono = np.ones(len(pts))
        for t, e in zip(pts.T, a):
            if e:
                mono = mono * t ** e
        out[:, ji[J], c] += float(v) * mono
    return out


def _dof_values_callable(func, k, values, dof: LocalDof, origins, As, degree):
    """Vectorized DOF values over many entities sharing a test form.

    ``func(x)`` maps (N, 3) points to (N, n_I(k), dim) coefficients.
    """
    d = dof.d
    tpts, tw = simplex_rule(d, degree)
    x = origins[:, None, :] + np.einsum("nij,qj->nqi", As, tpts)      # (n, Q, 3)
    n, Q = x.shape[:2]
    w = np.asarray(func(x.reshape(-1, 3)), dtype=float).reshape(n, Q, -1, values.dim)
    I_list = _COMBOS[k]
    J_list = list(itertools.combinations(range(d), k))
    pulled = np.zeros((n, Q, len(J_list), values.dim))
    for a, I in enumerate(I_list):
        for b, J in enumerate(J_list):
            if k == 0:
                m = np.ones(n)
            else:
                m = np.linalg.det(As[:, list(I), :][:, :, list(J)])
            pulled[:, :, b, :] += m[:, None, None] * w[:, :, a, :]
    z = _form_coeff_arrays(dof.test, tpts)                              # (Q, J', dim)
    Jc = list(itertools.combinations(range(d), d - k))
    total = np.zeros(n)
    weight = values.weight if dof.test.values is not R else 1
    for b, J in enumerate(J_list):
        for bc, Jp in enumerate(Jc):
            merged = J + Jp
            if len(set(merged)) != d:
                continue
            sign = 1
            for i in range(d):
                for j in range(i + 1, d):
                    if merged[i] > merged[j]:
                        sign = -sign
            if dof.test.values is R:
                prod = pulled[:, :, b, 0] * z[None, :, bc, 0]
            else:
                prod = weight * np.einsum("nqc,qc->nq", pulled[:, :, b, :], z[:, bc, :])
            total += sign * (prod * tw[None, :]).sum(axis=1)
    return total


def interpolate(space: FESpace, w, degree: int = 8) -> np.ndarray:
    """Canonical projection: global DOF values of ``w``.

    ``w`` is either an exact :class:`PolyForm` on R^3 (evaluated exactly
    with rational geometry, returned as float) or a callable mapping (N, 3)
    points to (N, n_I, dim) form coefficients (evaluated by quadrature of
    the given degree on each sub-simplex).
    """
    spec, mesh = space.spec, space.mesh
    out = np.full(space.dim, np.nan)
    done = np.zeros(space.dim, dtype=bool)
    if isinstance(w, PolyForm):
        if (w.k, w.values) != (spec.k, spec.values):
            raise ValueError("form does not match the space")
        for c in range(mesh.n_cells):
            gd = space.dofmap.cell_dofs[c]
            if done[gd].all():
                continue
            basis = space.basis(c)
            Bx, org = space.exact_B(c), space.exact_origin(c)
            for i, dof in enumerate(basis.dofs):
                if not done[gd[i]]:
                    out[gd[i]] = float(_dof_value_exact(w, dof, Bx, org))
                    done[gd[i]] = True
        return out
    # callable: group cells by basis; vectorize over cells per DOF
    first_cell = {}
    for c in range(mesh.n_cells):
        for g in space.dofmap.cell_dofs[c]:
            first_cell.setdefault(g, c)
    memo = {}

    def cached(x):
        key = x.tobytes()
        if key not in memo:
            if len(memo) > 64:
                memo.clear()
            memo[key] = w(x)
        return memo[key]

    for basis, cells in space.groups():
        gd = space.dofmap.cell_dofs[cells]
        for i, dof in enumerate(basis.dofs):
            owner = np.array([first_cell[g] for g in gd[:, i]])
            sel = cells[owner == cells]
            if len(sel) == 0:
                continue
            verts = LOCAL_ENTITIES[dof.d][dof.entity]
            pts = mesh.vertices[space.sorted_tets[sel]][:, list(verts), :]
            origins = pts[:, 0, :]
            As = np.transpose(pts[:, 1:, :] - origins[:, None, :], (0, 2, 1))
            vals = _dof_values_callable(cached, spec.k, spec.values, dof, origins, As, degree)
            out[space.dofmap.cell_dofs[sel, i]] = vals
    return out


def evaluate_field(space: FESpace, coeffs, point, cell: int, derivative=False):
    """Proxy value (dim, p) of a discrete field at a point inside ``cell``."""
    xhat = space.to_reference(cell, point)
    lam = np.concatenate([[1 - xhat.sum()], xhat])
    if (lam < -1e-10).any():
        raise ValueError(f"point {tuple(point)} lies outside cell {cell}")
    vals = space.physical_values([cell], xhat[None, :], derivative)[0, :, 0]   # (j, c, p)
    local = np.asarray(coeffs)[space.dofmap.cell_dofs[cell]]
    return np.einsum("j,jcp->cp", local, vals)
