"""Verification suites, manufactured solutions and convergence studies.

The suites return :class:`SuiteReport` objects with one named
:class:`CheckResult` per property.  Algebraic identities are checked in
exact rational arithmetic; discrete complexes are checked by integer rank
computations whenever the matrices are rational.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
import sympy

from . import exact
from .assembly import (MaterialParams, assemble_load, assemble_mass, assemble_stress_gram,
                       assemble_system, elasticity_spaces, exact_skw_block)
from .fespace import (FESpace, SpaceSpec, _COMBOS, build_local_basis, dof_matrix,
                      interpolate, plus_basis, reduced_parts)
from .mesh import LOCAL_ENTITIES, TetMesh, build_box_mesh
from .polyform import (K, M, R, V, MatrixField, PolyForm, S_op, S_prime_op, J_op,
                       cross_skew_check, eps_field, ext_d, matrix_from_proxy_2,
                       matrix_proxy_1, random_matrix_field, random_polyform, skw,
                       vect, vect_inv, wedge, xi, xi_inv)
from .quadrature import quadrature_rule, simplex_rule
from .solver import SolverError, infsup_estimate, matrix_rank, solve_saddle

logger = logging.getLogger(__name__)

CSV_HEADER = ["level", "h", "dof_sigma", "dof_u", "dof_p", "err_sigma", "err_div",
              "err_u", "err_p", "rate_sigma", "rate_div", "rate_u", "rate_p"]


# ---------------------------------------------------------------------------
# reports

@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float = 0.0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: {self.value:.3e}{extra}"


@dataclass
class SuiteReport:
    suite: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, value=0.0, detail=""):
        self.checks.append(CheckResult(f"{self.suite}.{name}", bool(passed),
                                       float(value), detail))

    def failures(self):
        return [c.name for c in self.checks if not c.passed]

    def lines(self):
        return [c.line() for c in self.checks]


# ---------------------------------------------------------------------------
# identity suite

def _deviation(form_or_matrix) -> float:
    if isinstance(form_or_matrix, MatrixField):
        form_or_matrix = form_or_matrix.form
    if isinstance(form_or_matrix, PolyForm):
        return float(form_or_matrix.max_abs())
    arr = np.asarray(form_or_matrix, dtype=object).ravel()
    return float(max((abs(x) for x in arr), default=0))


def _random_fraction_array(rng, shape):
    vals = [Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 5)))
            for _ in range(int(np.prod(shape)))]
    return np.array(vals, dtype=object).reshape(shape)


def run_identity_suite(seed: int = 0, trials: int = 100, degree: int = 4) -> SuiteReport:
    """Exact algebraic identities on seeded random polynomial inputs."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    rep = SuiteReport("identity")
    worst = {name: 0.0 for name in ("xi_inverse", "vect_inverse", "cross_skew",
                                    "dS_anticommutes", "adjoint", "identification",
                                    "J_eps", "div_J")}
    sparse = 0.35
    for trial in range(trials):
        m = _random_fraction_array(rng, (3, 3))
        worst["xi_inverse"] = max(worst["xi_inverse"], _deviation(xi_inv(xi(m)) - m),
                                  _deviation(xi(xi_inv(m)) - m))
        v = _random_fraction_array(rng, (3,))
        q = vect_inv(_random_fraction_array(rng, (3,)))
        worst["vect_inverse"] = max(worst["vect_inverse"], _deviation(vect(vect_inv(v)) - v),
                                    _deviation(vect_inv(vect(q)) - q))
        a, b = _random_fraction_array(rng, (3,)), _random_fraction_array(rng, (3,))
        left, right = cross_skew_check(a, b)
        worst["cross_skew"] = max(worst["cross_skew"], _deviation(left - right))

        k = trial % 2
        deg = 1 + trial % degree
        w = random_polyform(rng, k, V, deg, density=sparse)
        mu = random_polyform(rng, k, K, deg, density=sparse)
        worst["dS_anticommutes"] = max(
            worst["dS_anticommutes"],
            _deviation(ext_d(S_op(w)) + S_op(ext_d(w))),
            _deviation(ext_d(S_prime_op(mu)) + S_prime_op(ext_d(mu))))

        kk = trial % 3
        ll = (trial // 3) % (3 - kk)
        w = random_polyform(rng, kk, V, min(deg, 2), density=sparse)
        mu = random_polyform(rng, ll, K, min(deg, 2), density=sparse)
        worst["adjoint"] = max(worst["adjoint"], _deviation(
            wedge(S_op(w), mu) - (-1) ** kk * wedge(w, S_prime_op(mu))))

        F = random_matrix_field(rng, deg)
        lhs = matrix_from_proxy_2(S_op(matrix_proxy_1(F, V)))
        worst["identification"] = max(worst["identification"], _deviation(lhs - F.xi()))

        u = random_polyform(rng, 0, V, degree, density=sparse)
        worst["J_eps"] = max(worst["J_eps"], _deviation(J_op(eps_field(u))))
        G = random_matrix_field(rng, degree, symmetric=True)
        worst["div_J"] = max(worst["div_J"], _deviation(J_op(G).div_rows()))
    for name, val in worst.items():
        rep.add(name, val == 0, val, f"{trials} trials, exact")
    rep.seconds = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------
# polynomial forms as vectorized callables

def form_callable(form: PolyForm):
    """Vectorized evaluation ``x (N, 3) -> (N, n_I, dim)`` of form coefficients."""
    Is = _COMBOS[form.k]
    index = {I: i for i, I in enumerate(Is)}
    dim = form.values.dim
    alphas = sorted({a for (_, _, a) in form.terms}) or [(0, 0, 0)]
    arow = {a: i for i, a in enumerate(alphas)}
    expo = np.array(alphas, dtype=float)
    coef = np.zeros((len(alphas), len(Is) * dim))
    for (I, c, a), v in form.terms.items():
        coef[arow[a], index[I] * dim + c] += float(v)

    def func(x):
        x = np.asarray(x, dtype=float)
        mono = np.prod(x[:, None, :] ** expo[None], axis=2)
        return (mono @ coef).reshape(len(x), len(Is), dim)
    return func


# ---------------------------------------------------------------------------
# global operator matrices

def _assign(rows, cols, vals, shape, exact_mode, check=True):
    """Global matrix from local blocks, keeping one value per (row, col)."""
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    key = rows * shape[1] + cols
    uniq, first = np.unique(key, return_index=True)
    if check:
        ref = np.empty(len(key), dtype=vals.dtype)
        inv = np.searchsorted(uniq, key)
        ref[:] = vals[first[inv]]
        diff = max((abs(x) for x in (vals - ref)), default=0) if exact_mode else \
            float(np.abs(vals.astype(float) - ref.astype(float)).max(initial=0))
        if diff > (0 if exact_mode else 1e-9):
            raise RuntimeError(f"inconsistent shared DOF values (deviation {diff})")
    r, c, v = rows[first], cols[first], vals[first]
    if exact_mode:
        out = np.zeros(shape, dtype=object)
        out[r, c] = v
        return out
    return sp.csr_matrix((v.astype(float), (r, c)), shape=shape)


def global_d_matrix(Us: FESpace, Ws: FESpace, exact_mode=True):
    """Coefficient matrix of d from ``Us`` (k-forms) to ``Ws`` ((k+1)-forms)."""
    if Ws.spec.k != Us.spec.k + 1:
        raise ValueError("d maps k-forms to (k+1)-forms")
    rows, cols, vals = [], [], []
    key = Us.cell_group * (len(Ws.bases) + 1) + Ws.cell_group
    for g in np.unique(key):
        cells = np.nonzero(key == g)[0]
        bu, bw = Us.basis(int(cells[0])), Ws.basis(int(cells[0]))
        loc = dof_matrix(bw.dofs, [ext_d(s) for s in bu.shapes])
        if not exact_mode:
            loc = loc.astype(float)
        nz = np.argwhere(loc != 0)
        gu = Us.dofmap.cell_dofs[cells]
        gw = Ws.dofmap.cell_dofs[cells]
        for i, j in nz:
            rows.append(gw[:, i])
            cols.append(gu[:, j])
            vals.append(np.full(len(cells), loc[i, j], dtype=loc.dtype))
    if not rows:
        return _assign([np.zeros(0, int)], [np.zeros(0, int)],
                       [np.zeros(0, dtype=object if exact_mode else float)],
                       (Ws.dim, Us.dim), exact_mode)
    return _assign(rows, cols, vals, (Ws.dim, Us.dim), exact_mode)


def global_S1_matrix(Us: FESpace, Ws: FESpace, exact_mode=True):
    """Coefficient matrix of ``S_{1,h} = Pi^2_h S_1`` from Us (Lambda^1(V)) to Ws (Lambda^2(K))."""
    rows, cols, vals = [], [], []
    groups = {}
    for c in range(Us.mesh.n_cells):
        Bx = Us.exact_B(c)
        kk = (tuple(x for row in Bx for x in row), Us.cell_group[c], Ws.cell_group[c])
        groups.setdefault(kk, []).append(c)
    for kk, cells in groups.items():
        cells = np.array(cells)
        Bx = Us.exact_B(int(cells[0]))
        frame = [[Bx[i][j] for i in range(3)] for j in range(3)]
        bu, bw = Us.basis(int(cells[0])), Ws.basis(int(cells[0]))
        loc = dof_matrix(bw.dofs, [S_op(s, frame=frame) for s in bu.shapes])
        if not exact_mode:
            loc = loc.astype(float)
        gu = Us.dofmap.cell_dofs[cells]
        gw = Ws.dofmap.cell_dofs[cells]
        for i, j in np.argwhere(loc != 0):
            rows.append(gw[:, i])
            cols.append(gu[:, j])
            vals.append(np.full(len(cells), loc[i, j], dtype=loc.dtype))
    return _assign(rows, cols, vals, (Ws.dim, Us.dim), exact_mode)


def _rank(mat, exact_mode, tol=1e-10):
    if exact_mode:
        return exact.rank(mat)
    return matrix_rank(mat, tol)


def _is_zero(mat, exact_mode):
    if exact_mode:
        return all(x == 0 for x in np.asarray(mat).ravel())
    return abs(mat).max() == 0 if sp.issparse(mat) else not np.any(mat)


# ---------------------------------------------------------------------------
# commuting suite

def ladder_specs(r: int, which: str, values=R):
    """Spec ladders: ``plus`` is P_r^+ Lambda^k, ``tilde`` is
    P_{r+2}L0, P_{r+1}^+ L1, P_{r+1} L2, P_r L3."""
    if which == "plus":
        return [SpaceSpec("Pplus", r, k, values) for k in range(4)]
    if which == "tilde":
        return [SpaceSpec("P", r + 2, 0, values), SpaceSpec("Pplus", r + 1, 1, values),
                SpaceSpec("P", r + 1, 2, values), SpaceSpec("P", r, 3, values)]
    raise ValueError(f"unknown ladder {which!r}")


def run_commuting_suite(mesh: TetMesh, r: int = 0, trials: int = 20, seed: int = 0,
                        tol: float = 1e-10, reduced=False) -> SuiteReport:
    """Commuting projections and ``S_{1,h} Pi~^1 = Pi^2 S_1``."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    rep = SuiteReport("commuting")
    deg = r + 2
    qdeg = 2 * (r + 3) + 2
    for which, values in (("plus", K), ("tilde", V)):
        specs = ladder_specs(r, which, values)
        spaces = [FESpace(s, mesh) for s in specs]
        for k in range(3):
            D = global_d_matrix(spaces[k], spaces[k + 1], exact_mode=False)
            worst = 0.0
            for _ in range(trials):
                w = random_polyform(rng, k, values, deg, exact=False)
                lhs = D @ interpolate(spaces[k], form_callable(w), qdeg)
                rhs = interpolate(spaces[k + 1], form_callable(ext_d(w)), qdeg)
                worst = max(worst, np.abs(lhs - rhs).max() / max(1.0, np.abs(rhs).max()))
            rep.add(f"{which}.d{k}", worst < tol, worst, f"{trials} random degree-{deg} forms")
    tilde1 = FESpace(SpaceSpec("Pplus", r + 1, 1, V), mesh) if not reduced else \
        FESpace(SpaceSpec("P1minus_plus_L1", 1, 1, V), mesh)
    lam2 = FESpace(SpaceSpec("Pplus", r, 2, K), mesh)
    S = global_S1_matrix(tilde1, lam2, exact_mode=False)
    worst = 0.0
    for _ in range(trials):
        w = random_polyform(rng, 1, V, deg, exact=False)
        lhs = S @ interpolate(tilde1, form_callable(w), qdeg)
        rhs = interpolate(lam2, form_callable(S_op(w)), qdeg)
        worst = max(worst, np.abs(lhs - rhs).max() / max(1.0, np.abs(rhs).max()))
    if not reduced:
        rep.add("S1h_identity", worst < tol, worst, f"{trials} random degree-{deg} forms")
    rk = matrix_rank(S.toarray())
    rep.add("S1h_onto", rk == lam2.dim, lam2.dim - rk, f"rank {rk} of {lam2.dim} rows")
    rep.seconds = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------
# exactness suite

def _ladder_report(rep, name, spaces, exact_mode):
    ds = [global_d_matrix(spaces[k], spaces[k + 1], exact_mode) for k in range(3)]
    ranks = [_rank(d if exact_mode else d.toarray(), exact_mode) for d in ds]
    dims = [s.dim for s in spaces]
    kernels = [dims[k] - (ranks[k] if k < 3 else 0) for k in range(4)]
    betti = [kernels[0]] + [kernels[k] - ranks[k - 1] for k in range(1, 4)]
    rep.add(f"{name}.betti", betti == [1, 0, 0, 0], sum(abs(b) for b in betti[1:]),
            f"dims {dims}, ranks {ranks}, betti {tuple(betti)}")
    for k in range(2):
        prod = ds[k + 1] @ ds[k]
        dev = max((abs(x) for x in np.asarray(prod).ravel()), default=0) if exact_mode \
            else (abs(prod).max() if prod.nnz else 0.0)
        rep.add(f"{name}.dd{k}", dev == 0, float(dev), "composite d after d")
    return ds


def run_exactness_suite(mesh: TetMesh, r: int = 0, exact_mode=None) -> SuiteReport:
    """Betti numbers of both ladders, dd = 0 and onto-ness of [div; 2 Pi_Q skw]."""
    t0 = time.perf_counter()
    if exact_mode is None:
        exact_mode = mesh.n_cells <= 6
    rep = SuiteReport("exactness")
    for which in ("plus", "tilde"):
        spaces = [FESpace(s, mesh) for s in ladder_specs(r, which)]
        _ladder_report(rep, which, spaces, exact_mode)
    Sigma, Vh, Qh = elasticity_spaces(mesh, r)
    _stability_rank(rep, "stability_onto", Sigma, Vh, Qh, exact_mode)
    rep.seconds = time.perf_counter() - t0
    return rep


def _stability_rank(rep, name, Sigma, Vh, Qh, exact_mode):
    Ddiv = global_d_matrix(Sigma, Vh, exact_mode)
    if exact_mode:
        C = exact_skw_block(Sigma, Qh)
        stacked = np.vstack([Ddiv, C])
        rk = exact.rank(stacked)
    else:
        # 2 Pi_Q skw in coefficients is (M_Q/2)^{-1} C; row scaling keeps the rank
        from .assembly import assemble_skw
        Mq = assemble_mass(Qh).toarray()
        C = np.linalg.solve(Mq / 2, assemble_skw(Sigma, Qh).toarray())
        stacked = np.vstack([Ddiv.toarray(), C])
        rk = matrix_rank(stacked, 1e-10)
    target = Vh.dim + Qh.dim
    rep.add(name, rk == target, target - rk,
            f"rank {rk} of {target} ({'exact' if exact_mode else 'svd'})")


# ---------------------------------------------------------------------------
# simplified element checks

def frame_face_dof_matrix(basis, B=None) -> np.ndarray:
    """24x24 matrix of the reduced-stress shapes against the frame-based
    face functionals int_f F n, int_f (x.t) n^T F n, int_f (x.s) n^T F n and
    int_f [(x.t) s - (x.s) t]^T F n, evaluated by quadrature in floats.

    The frame per face: t = first edge normalized, n = unit normal of the
    sorted-order parametrization, s = n x t.  Positions x are taken
    relative to the first face vertex.
    """
    B = np.eye(3) if B is None else np.asarray(B, dtype=float)
    pts, w = simplex_rule(2, 6)
    verts = np.vstack([np.zeros(3), B.T])
    rows = []
    for e, face in enumerate(LOCAL_ENTITIES[2]):
        x0, x1, x2 = verts[list(face)]
        a1, a2 = x1 - x0, x2 - x0
        nvec = np.cross(a1, a2)
        area2 = np.linalg.norm(nvec)
        n = nvec / area2
        t = a1 / np.linalg.norm(a1)
        s = np.cross(n, t)
        ref = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
        y0, y1, y2 = ref[list(face)]
        xhat = y0 + pts[:, :1] * (y1 - y0) + pts[:, 1:] * (y2 - y0)
        Binv = np.linalg.inv(B)
        vals = basis.tabulate(xhat)                     # (j, q, I, c)
        from .fespace import proxy_matrix, pushforward_matrices
        P = pushforward_matrices(Binv[None], 2)[0]
        F = np.einsum("jqJc,JI,Ip->jqcp", vals, P, proxy_matrix(2))
        Fn = F @ n                                      # (j, q, 3)
        rel = (xhat @ B.T) - x0
        xt, xs = rel @ t, rel @ s
        wq = w * area2
        for c in range(3):
            rows.append(np.einsum("jq,q->j", Fn[:, :, c], wq))
        rows.append(np.einsum("jq,q->j", (Fn @ n) * xt[None], wq))
        rows.append(np.einsum("jq,q->j", (Fn @ n) * xs[None], wq))
        rows.append(np.einsum("jq,q->j", (Fn @ s) * xt[None] - (Fn @ t) * xs[None], wq))
    return np.array(rows)


def run_simplified_suite(mesh: TetMesh | None = None, trials: int = 5, seed: int = 0) -> SuiteReport:
    """Unisolvency, dimensions, inclusion and complex checks for the reduced element."""
    t0 = time.perf_counter()
    rep = SuiteReport("simplified")
    (fam1, dofs1, basis1), (fam2, dofs2, basis2), extra = reduced_parts()
    rep.add("dimension_L1", basis1.shape[1] == 48, basis1.shape[1], "expected 48")
    rep.add("dimension_L2", basis2.shape[1] == 24, basis2.shape[1], "expected 24")
    from .fespace import _scalar_dof_matrix_mixed, _family_tag
    l2 = SpaceSpec("P1minus_L2", 1, 2, V)
    v2 = _scalar_dof_matrix_mixed(dofs2, fam2, _family_tag(l2))
    det = exact.det(v2 @ extra["span2"])
    rep.add("unisolvent_exact", det != 0, float(det), "24x24 moment matrix, rational")
    b2 = build_local_basis(l2)
    pm = frame_face_dof_matrix(b2)
    sv = np.linalg.svd(pm, compute_uv=False)
    rep.add("unisolvent_frame_functionals", sv[-1] > 1e-10 * sv[0], sv[-1] / sv[0],
            "smallest relative singular value")
    # inclusion: Whitney 2-forms (tensor V) in the reduced space
    ns2 = len(fam2)
    keys = {next(iter(f.terms))[::2]: i for i, f in enumerate(fam2)}
    whit = np.zeros((3 * ns2, 12), dtype=object)
    col = 0
    for c in range(3):
        for f in plus_basis(3, 2, 0):
            for (I, _, a), v in f.terms.items():
                whit[c * ns2 + keys[(I, a)], col] += v
            col += 1
    rk = exact.rank(np.hstack([basis2, whit]))
    rep.add("inclusion", rk == 24, rk - 24, "rank [P1- | P0+] minus 24")
    # d maps the 48-space into the 24-space
    ns1 = len(fam1)
    dmat = extra["dmat"]
    dimg = np.zeros((3 * ns2, 48), dtype=object)
    for c in range(3):
        dimg[c * ns2:(c + 1) * ns2] = dmat @ basis1[c * ns1:(c + 1) * ns1]
    rk = exact.rank(np.hstack([basis2, dimg]))
    rep.add("d_into", rk == 24, rk - 24, "rank [P1- | d P1-+] minus 24")
    if mesh is not None:
        exact_mode = mesh.n_cells <= 6
        L1 = FESpace(SpaceSpec("P1minus_plus_L1", 1, 1, V), mesh)
        L2 = FESpace(l2, mesh)
        L3 = FESpace(SpaceSpec("P", 0, 3, V), mesh)
        d1 = global_d_matrix(L1, L2, exact_mode)
        d2 = global_d_matrix(L2, L3, exact_mode)
        prod = d2 @ d1
        dev = max((abs(x) for x in np.asarray(prod).ravel()), default=0) if exact_mode \
            else (abs(prod).max() if prod.nnz else 0.0)
        rep.add("complex", dev == 0, float(dev), "d after d on the reduced sequence")
        r1 = _rank(d1 if exact_mode else d1.toarray(), exact_mode)
        r2 = _rank(d2 if exact_mode else d2.toarray(), exact_mode)
        rep.add("div_onto", r2 == L3.dim, L3.dim - r2, f"rank {r2} of {L3.dim}")
        rep.add("exact_middle", r1 == L2.dim - r2, L2.dim - r2 - r1,
                f"rank d1 {r1}, dim ker d2 {L2.dim - r2}")
        lam2 = FESpace(SpaceSpec("Pplus", 0, 2, K), mesh)
        S = global_S1_matrix(L1, lam2, exact_mode)
        rk = _rank(S if exact_mode else S.toarray(), exact_mode)
        rep.add("S1h_onto", rk == lam2.dim, lam2.dim - rk, f"rank {rk} of {lam2.dim}")
        Sigma, Vh, Qh = elasticity_spaces(mesh, 0, simplified=True)
        _stability_rank(rep, "stability_onto", Sigma, Vh, Qh, exact_mode)
    rep.seconds = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------
# manufactured solutions

_X = sympy.symbols("x y z", real=True)


@dataclass
class ManufacturedCase:
    """Analytic displacement and derived stress, rotation and load.

    ``clamped`` cases vanish on the boundary of the unit cube; otherwise the
    displacement trace enters the right-hand side as boundary data.
    """

    id: str
    u_expr: list
    params: MaterialParams
    clamped: bool
    sigma: object = field(repr=False, default=None)
    u: object = field(repr=False, default=None)
    p: object = field(repr=False, default=None)
    f: object = field(repr=False, default=None)
    div_sigma: object = field(repr=False, default=None)

    def __post_init__(self):
        x = _X
        u = sympy.Matrix(self.u_expr)
        grad = u.jacobian(x)
        eps = (grad + grad.T) / 2
        skwm = (grad - grad.T) / 2
        lam = sympy.nsimplify(self.params.lam)
        mu = sympy.nsimplify(self.params.mu)
        sig = 2 * mu * eps + lam * eps.trace() * sympy.eye(3)
        f = sympy.Matrix([sum(sympy.diff(sig[i, j], x[j]) for j in range(3))
                          for i in range(3)])
        self._sym = dict(u=u, sigma=sig, p=skwm, f=f)
        self.u = _vector_fn(u)
        self.sigma = _matrix_fn(sig)
        self.p = _matrix_fn(skwm)
        self.f = _vector_fn(f)
        self.div_sigma = self.f

    @property
    def symbolic(self):
        return self._sym


def _vector_fn(expr):
    fn = sympy.lambdify(_X, list(expr), "numpy")

    def call(pts):
        pts = np.asarray(pts, dtype=float)
        vals = fn(pts[:, 0], pts[:, 1], pts[:, 2])
        return np.stack([np.broadcast_to(np.asarray(v, float), pts[:, 0].shape)
                         for v in vals], axis=-1)
    return call


def _matrix_fn(expr):
    flat = _vector_fn(list(expr))

    def call(pts):
        return flat(pts).reshape(-1, 3, 3)
    return call


CASES = ("trig", "poly-quadratic", "poly-linear", "divfree")


def manufactured_case(case_id: str, lam: float = 1.0, mu: float = 1.0) -> ManufacturedCase:
    """Manufactured solutions on the unit cube.

    ``trig``: ``u = sin(pi x) sin(pi y) sin(pi z) (1, 2, 3)``.
    ``poly-quadratic``: bubble ``x(1-x)y(1-y)z(1-z)`` times linear factors.
    ``poly-linear``: ``u = grad phi + b x r`` with cubic phi, so the stress
    is linear and the rotation constant; not clamped.
    ``divfree``: ``u = curl(b^2 (1, 2, 3))`` with b the cube bubble; div u = 0,
    so the stress does not grow with lambda.
    """
    x, y, z = _X
    params = MaterialParams(lam, mu)
    if case_id == "trig":
        s = sympy.sin(sympy.pi * x) * sympy.sin(sympy.pi * y) * sympy.sin(sympy.pi * z)
        return ManufacturedCase(case_id, [s, 2 * s, 3 * s], params, True)
    if case_id == "poly-quadratic":
        b = x * (1 - x) * y * (1 - y) * z * (1 - z)
        return ManufacturedCase(case_id, [b * (1 + x), b * (2 - y), b * (1 + z)], params, True)
    if case_id == "poly-linear":
        phi = x ** 3 / 6 + x * y * z + y ** 2 * z / 2 - z ** 3 / 3 + x * y
        grad = [sympy.diff(phi, v) for v in _X]
        rot = [2 * z - 3 * y, 3 * x - z, y - 2 * x]          # (1, 2, 3) x r
        return ManufacturedCase(case_id, [g + r_ for g, r_ in zip(grad, rot)], params, False)
    if case_id == "divfree":
        b2 = (x * (1 - x) * y * (1 - y) * z * (1 - z)) ** 2
        psi = [b2, 2 * b2, 3 * b2]
        u = [sympy.diff(psi[2], y) - sympy.diff(psi[1], z),
             sympy.diff(psi[0], z) - sympy.diff(psi[2], x),
             sympy.diff(psi[1], x) - sympy.diff(psi[0], y)]
        return ManufacturedCase(case_id, u, params, True)
    raise ValueError(f"unknown manufactured case {case_id!r}; expected one of {CASES}")


# ---------------------------------------------------------------------------
# boundary data

def assemble_boundary_term(Sigma: FESpace, g, degree: int = 6) -> np.ndarray:
    """``int_{boundary} g . tau n`` for every stress basis function."""
    mesh = Sigma.mesh
    out = np.zeros(Sigma.dim)
    tpts, tw = simplex_rule(2, degree)
    ref = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    stets = Sigma.sorted_tets
    faces_of = {}
    from .fespace import _entity_lookup
    look = _entity_lookup(mesh, 2, stets)
    for e in range(4):
        bcells = np.nonzero(mesh.boundary_faces[look[:, e]])[0]
        if len(bcells) == 0:
            continue
        face = LOCAL_ENTITIES[2][e]
        opp = [v for v in range(4) if v not in face][0]
        y0, y1, y2 = ref[list(face)]
        xhat = y0 + tpts[:, :1] * (y1 - y0) + tpts[:, 1:] * (y2 - y0)
        for basis, cells in Sigma.groups():
            cells = np.intersect1d(cells, bcells)
            if len(cells) == 0:
                continue
            F = Sigma.physical_values(cells, xhat, basis=basis)      # (n, j, q, 3, 3)
            P = mesh.vertices[stets[cells]]
            A1 = P[:, face[1]] - P[:, face[0]]
            A2 = P[:, face[2]] - P[:, face[0]]
            nv = np.cross(A1, A2)
            outward = np.sign(np.einsum("ni,ni->n", nv, P[:, face[0]] - P[:, opp]))
            nv = nv * outward[:, None]
            x = Sigma.physical_points(cells, xhat)
            gx = np.asarray(g(x.reshape(-1, 3)), float).reshape(x.shape)
            loc = np.einsum("njqcp,np,nqc,q->nj", F, nv, gx, tw)
            np.add.at(out, Sigma.dofmap.cell_dofs[cells], loc)
    return out


# ---------------------------------------------------------------------------
# errors and convergence

@dataclass
class ErrorReport:
    h: float
    dof_sigma: int
    dof_u: int
    dof_p: int
    err_sigma: float
    err_div: float
    err_u: float
    err_p: float
    weak_symmetry: float = float("nan")
    residual: float = float("nan")


def discrete_values(space: FESpace, coeffs, cells, points, basis, derivative=False):
    vals = space.physical_values(cells, points, derivative, basis=basis)
    loc = np.asarray(coeffs)[space.dofmap.cell_dofs[cells]]
    return np.einsum("nj,njqcp->nqcp", loc, vals)


def compute_errors(case: ManufacturedCase, report, system, degree=None) -> ErrorReport:
    """L2 errors of stress, divergence, displacement and rotation."""
    Sigma, Vh, Qh = system.spaces
    r = Vh.spec.r
    # generous: the analytic fields are not polynomial and coarse cells are large
    degree = degree if degree is not None else max(2 * (r + 2), 6) + 6
    pts, w = quadrature_rule(degree)
    acc = np.zeros(4)
    key = Sigma.cell_group * 10007 + Vh.cell_group * 101 + Qh.cell_group
    for g in np.unique(key):
        cells = np.nonzero(key == g)[0]
        c0 = int(cells[0])
        bs, bv, bq = Sigma.basis(c0), Vh.basis(c0), Qh.basis(c0)
        for s in range(0, len(cells), 512):
            ch = cells[s:s + 512]
            x = Sigma.physical_points(ch, pts).reshape(-1, 3)
            wq = (np.abs(Sigma.detB[ch])[:, None] * w[None, :]).ravel()
            sh = discrete_values(Sigma, report.sigma, ch, pts, bs).reshape(-1, 3, 3)
            dh = discrete_values(Sigma, report.sigma, ch, pts, bs, True).reshape(-1, 3)
            uh = discrete_values(Vh, report.u, ch, pts, bv).reshape(-1, 3)
            ah = discrete_values(Qh, report.p, ch, pts, bq).reshape(-1, 3)
            ph = _skew_of(ah)
            acc[0] += np.sum(wq * np.sum((case.sigma(x) - sh) ** 2, axis=(1, 2)))
            acc[1] += np.sum(wq * np.sum((case.f(x) - dh) ** 2, axis=1))
            acc[2] += np.sum(wq * np.sum((case.u(x) - uh) ** 2, axis=1))
            acc[3] += np.sum(wq * np.sum((case.p(x) - ph) ** 2, axis=(1, 2)))
    e = np.sqrt(acc)
    return ErrorReport(Sigma.mesh.mesh_size(), Sigma.dim, Vh.dim, Qh.dim, *e,
                       weak_symmetry=report.weak_symmetry, residual=report.residual)


def _skew_of(a):
    """Skew matrices ``vect_inv(a)`` for an (N, 3) array of axial vectors."""
    z = np.zeros(len(a))
    return np.stack([np.stack([z, -a[:, 2], a[:, 1]], -1),
                     np.stack([a[:, 2], z, -a[:, 0]], -1),
                     np.stack([-a[:, 1], a[:, 0], z], -1)], axis=1)


def solve_case(case: ManufacturedCase, mesh: TetMesh, r: int = 0, simplified=False,
               spaces=None):
    """Assemble, solve and measure errors for a manufactured case."""
    system = assemble_system(mesh, r, case.params, case.f, simplified, spaces)
    if not case.clamped:
        system.g = assemble_boundary_term(system.spaces[0], case.u)
    report = solve_saddle(system)
    return system, report, compute_errors(case, report, system)


def fit_rate(hs, errs) -> float:
    """Least-squares slope of log(err) against log(h)."""
    hs, errs = np.asarray(hs, float), np.asarray(errs, float)
    if len(hs) < 2 or np.any(errs <= 0):
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


@dataclass
class ConvergenceTable:
    rows: list
    r: int
    case: str

    def rates(self, upto=None) -> dict:
        rows = self.rows[:upto] if upto else self.rows
        hs = [x.h for x in rows]
        return {name: fit_rate(hs, [getattr(x, f"err_{name}") for x in rows])
                for name in ("sigma", "div", "u", "p")}

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_HEADER)
        for i, row in enumerate(self.rows):
            rates = self.rates(i + 1) if i > 0 else None
            wr.writerow([i, f"{row.h:.6e}", row.dof_sigma, row.dof_u, row.dof_p,
                         f"{row.err_sigma:.6e}", f"{row.err_div:.6e}", f"{row.err_u:.6e}",
                         f"{row.err_p:.6e}"] +
                        (["", "", "", ""] if rates is None else
                         [f"{rates[k]:.4f}" for k in ("sigma", "div", "u", "p")]))
        return buf.getvalue()


def convergence_study(case: ManufacturedCase, r: int, sizes, simplified=False) -> ConvergenceTable:
    """Errors on box meshes with the given subdivisions and fitted rates."""
    sizes = list(sizes)
    if len(sizes) < 3:
        raise ValueError("a convergence study needs at least 3 mesh levels")
    rows = []
    for n in sorted(sizes):
        mesh = build_box_mesh(n)
        _, _, err = solve_case(case, mesh, r, simplified)
        logger.info("n=%d h=%.3f errors %.3e %.3e %.3e %.3e", n, err.h, err.err_sigma,
                    err.err_div, err.err_u, err.err_p)
        rows.append(err)
    return ConvergenceTable(rows, r, case.id)


# ---------------------------------------------------------------------------
# inf-sup

def infsup_for_mesh(mesh: TetMesh, r: int = 0, simplified=False, control=None) -> float:
    """beta_h for (Sigma_h, V_h x Q_h); ``control`` selects an unstable pairing."""
    kw = {}
    if control is not None:
        kw = negative_control_specs(control, r)
    Sigma, Vh, Qh = elasticity_spaces(mesh, r, simplified, **kw)
    from .assembly import assemble_div, assemble_skw
    B = sp.vstack([assemble_div(Sigma, Vh), assemble_skw(Sigma, Qh)]).tocsr()
    Ms = assemble_stress_gram(Sigma, with_div=True)
    Mt = sp.block_diag([assemble_mass(Vh), assemble_mass(Qh)])
    return infsup_estimate(B, Ms, Mt)


def negative_control_specs(name: str, r: int = 0) -> dict:
    """Deliberately unstable space pairings."""
    if name == "rt-stress":
        return dict(sigma_spec=SpaceSpec("Pplus", r, 2, V))
    if name == "q-high":
        return dict(q_spec=SpaceSpec("P", r + 1, 3, K))
    raise ValueError(f"unknown negative control {name!r}")
