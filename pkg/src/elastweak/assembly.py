"""Quadrature-based assembly of the weak-symmetry saddle-point system.

The discrete problem seeks ``(sigma, u, p)`` in ``Sigma_h x V_h x Q_h`` with::

    (A sigma, tau) + (u, div tau) + (p, tau) = 0
    (div sigma, v)                           = (f, v)
    (sigma, q)                               = 0

Stress shapes are ``V``-valued 2-forms whose matrix proxy has the form
proxies as rows; displacements are ``V``-valued 3-forms and rotations
``K``-valued 3-forms whose proxies are vectors resp. skew matrices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from . import exact
from .fespace import FESpace, SpaceSpec, _COMBOS, proxy_matrix
from .mesh import TetMesh
from .polyform import K, V, PolyForm, _pmul, _simplex_monomial_integral
from .quadrature import quadrature_rule

logger = logging.getLogger(__name__)

CHUNK = 256


@dataclass(frozen=True)
class MaterialParams:
    """Isotropic Lame parameters or a general compliance callback.

    ``compliance`` maps points (N, 3) to (N, 9, 9) matrices acting on
    row-major flattened stresses; it overrides ``lam``/``mu`` when given.
    """

    lam: float = 1.0
    mu: float = 1.0
    compliance: object = None

    def __post_init__(self):
        if self.compliance is None:
            if not np.isfinite(self.mu) or self.mu <= 0:
                raise ValueError(f"shear modulus mu must be > 0, got {self.mu}")
            if not np.isfinite(self.lam) or self.lam < 0:
                raise ValueError(f"Lame parameter lambda must be >= 0, got {self.lam}")

    @property
    def isotropic(self) -> bool:
        return self.compliance is None

    def apply_compliance(self, sigma):
        """``A sigma`` for stress arrays (..., 3, 3), isotropic case only."""
        sigma = np.asarray(sigma)
        tr = np.trace(sigma, axis1=-2, axis2=-1)[..., None, None]
        c = self.lam / (2 * self.mu + 3 * self.lam)
        return (sigma - c * tr * np.eye(3)) / (2 * self.mu)

    def apply_stiffness(self, eps):
        """Inverse of the isotropic compliance: ``2 mu eps + lam tr(eps) I``."""
        eps = np.asarray(eps)
        tr = np.trace(eps, axis1=-2, axis2=-1)[..., None, None]
        return 2 * self.mu * eps + self.lam * tr * np.eye(3)

    def compliance_matrices(self, x):
        A = np.asarray(self.compliance(x), dtype=float)
        if A.shape[1:] != (9, 9):
            raise ValueError("compliance callback must return (N, 9, 9) arrays")
        if not np.allclose(A, np.transpose(A, (0, 2, 1)), rtol=1e-12, atol=1e-14):
            raise ValueError("compliance map is not symmetric")
        lo = np.linalg.eigvalsh(A).min()
        if lo <= 0:
            raise ValueError(f"compliance map is not positive definite (eigenvalue {lo:.3e})")
        return A


@dataclass
class BlockSystem:
    """Assembled saddle-point system ``[[A, B^T, C^T], [B, 0, 0], [C, 0, 0]]``.

    ``g`` holds boundary displacement data for the stress equation.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    f: np.ndarray
    spaces: tuple = field(default=None, repr=False)
    params: MaterialParams = None
    g: np.ndarray = None

    @property
    def offsets(self):
        ns, nu, npp = self.A.shape[0], self.B.shape[0], self.C.shape[0]
        return (0, ns, ns + nu, ns + nu + npp)

    @property
    def matrix(self) -> sp.csr_matrix:
        return sp.bmat([[self.A, self.B.T, self.C.T],
                        [self.B, None, None],
                        [self.C, None, None]], format="csr")

    @property
    def rhs(self) -> np.ndarray:
        ns, npp = self.A.shape[0], self.C.shape[0]
        top = np.zeros(ns) if self.g is None else self.g
        return np.concatenate([top, self.f, np.zeros(npp)])


# ---------------------------------------------------------------------------
# space triples

def elasticity_spaces(mesh: TetMesh, r: int = 0, simplified=False, q_spec=None,
                      sigma_spec=None):
    """``(Sigma_h, V_h, Q_h)`` for the stable family of degree r.

    ``Sigma_h = P_{r+1} Lambda^2(V)`` (or the reduced 24-dimensional space
    when ``simplified``), ``V_h = P_r Lambda^3(V)``, ``Q_h = P_r Lambda^3(K)``.
    ``q_spec``/``sigma_spec`` override the defaults (used for unstable
    negative controls).
    """
    if simplified and r != 0:
        raise ValueError("the simplified element exists only for r = 0")
    if sigma_spec is None:
        sigma_spec = (SpaceSpec("P1minus_L2", 1, 2, V) if simplified
                      else SpaceSpec("P", r + 1, 2, V))
    v_spec = SpaceSpec("P", r, 3, V)
    q_spec = q_spec or SpaceSpec("P", r, 3, K)
    return FESpace(sigma_spec, mesh), FESpace(v_spec, mesh), FESpace(q_spec, mesh)


# ---------------------------------------------------------------------------
# element loops

def _chunks(cells):
    for s in range(0, len(cells), CHUNK):
        yield cells[s:s + CHUNK]


def _coo(rows, cols, vals, shape):
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    return sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


def _pair_groups(U: FESpace, W: FESpace):
    """Cells grouped so both spaces have a single local basis per group."""
    key = U.cell_group * (len(W.bases) + 1) + W.cell_group
    for g in np.unique(key):
        cells = np.nonzero(key == g)[0]
        yield U.basis(int(cells[0])), W.basis(int(cells[0])), cells


def _bilinear(U: FESpace, W: FESpace, degree, kernel, du=False, dw=False):
    """Assemble ``[kernel(u_j, w_i)]`` with rows in W and columns in U.

    ``kernel(u_vals, w_vals, x, wq)`` receives physical proxy values
    (n, ju, q, c, p) and (n, jw, q, c, p), physical points (n, q, 3) and
    weights (n, q); it returns (n, jw, ju) local matrices.
    """
    pts, w = quadrature_rule(degree)
    rows, cols, vals = [], [], []
    for bu, bw, cells in _pair_groups(U, W):
        for ch in _chunks(cells):
            uv = U.physical_values(ch, pts, du, basis=bu)
            wv = W.physical_values(ch, pts, dw, basis=bw)
            x = U.physical_points(ch, pts)
            wq = np.abs(U.detB[ch])[:, None] * w[None, :]
            loc = kernel(uv, wv, x, wq)
            if U is W and du == dw:
                # symmetric kernels: remove roundoff asymmetry
                loc = 0.5 * (loc + loc.transpose(0, 2, 1))
            gu = U.dofmap.cell_dofs[ch]
            gw = W.dofmap.cell_dofs[ch]
            rows.append(np.repeat(gw, gu.shape[1], axis=1).ravel())
            cols.append(np.tile(gu, (1, gw.shape[1])).ravel())
            vals.append(loc.ravel())
    return _coo(rows, cols, vals, (W.dim, U.dim))


def _inner(uv, wv, wq):
    return np.einsum("njqcp,niqcp,nq->nij", uv, wv, wq, optimize=True)


def _skew_pair(F):
    """``F : vect_inv(e_m)`` for m = 0, 1, 2 from (..., 3, 3) matrices."""
    return np.stack([F[..., 2, 1] - F[..., 1, 2], F[..., 0, 2] - F[..., 2, 0],
                     F[..., 1, 0] - F[..., 0, 1]], axis=-1)


def default_degree(r: int) -> int:
    return 2 * (r + 1) + 2


def assemble_compliance(Sigma: FESpace, params: MaterialParams, degree=None):
    """Compliance block ``(A phi_j, phi_i)`` on the stress space."""
    degree = degree if degree is not None else default_degree(Sigma.spec.r - 1)
    if params.isotropic:
        a = 1.0 / (2 * params.mu)
        c = params.lam / (2 * params.mu + 3 * params.lam)

        def kernel(uv, wv, x, wq):
            full = _inner(uv, wv, wq)
            tu = np.trace(uv, axis1=3, axis2=4)
            tw = np.trace(wv, axis1=3, axis2=4)
            tr = np.einsum("njq,niq,nq->nij", tu, tw, wq, optimize=True)
            return a * (full - c * tr)
    else:
        def kernel(uv, wv, x, wq):
            Am = params.compliance_matrices(x.reshape(-1, 3)).reshape(
                x.shape[0], x.shape[1], 9, 9)
            n, ju, q = uv.shape[:3]
            Au = np.einsum("nqab,njqb->njqa", Am, uv.reshape(n, ju, q, 9))
            return np.einsum("njqa,niqa,nq->nij", Au,
                             wv.reshape(n, wv.shape[1], q, 9), wq, optimize=True)
    return _bilinear(Sigma, Sigma, degree, kernel)


def assemble_stress_gram(Sigma: FESpace, degree=None, with_div=False):
    """L2 (or H(div) when ``with_div``) Gram matrix of the stress space."""
    degree = degree if degree is not None else default_degree(Sigma.spec.r - 1)
    G = _bilinear(Sigma, Sigma, degree, lambda uv, wv, x, wq: _inner(uv, wv, wq))
    if with_div:
        G = G + _bilinear(Sigma, Sigma, degree, lambda uv, wv, x, wq: _inner(uv, wv, wq),
                          du=True, dw=True)
    return G


def assemble_div(Sigma: FESpace, Vh: FESpace, degree=None):
    """Divergence coupling ``(div phi_j, psi_i)``; rows V_h, columns Sigma_h."""
    degree = degree if degree is not None else default_degree(Sigma.spec.r - 1)
    return _bilinear(Sigma, Vh, degree, lambda uv, wv, x, wq: _inner(uv, wv, wq), du=True)


def assemble_skw(Sigma: FESpace, Qh: FESpace, degree=None):
    """Skew coupling ``(phi_j, q_i)``; rows Q_h, columns Sigma_h."""
    degree = degree if degree is not None else default_degree(Sigma.spec.r - 1)

    def kernel(uv, wv, x, wq):
        return np.einsum("njqm,niqm,nq->nij", _skew_pair(uv), wv[..., 0], wq,
                         optimize=True)
    return _bilinear(Sigma, Qh, degree, kernel)


def assemble_mass(W: FESpace, degree=None):
    """L2 Gram matrix of a space of 3-forms (Frobenius for K values)."""
    degree = degree if degree is not None else 2 * W.spec.r + 2
    weight = 2.0 if W.spec.values is K else 1.0
    return _bilinear(W, W, degree, lambda uv, wv, x, wq: weight * _inner(uv, wv, wq))


def assemble_load(Vh: FESpace, f, degree=None) -> np.ndarray:
    """Load vector ``(f, psi_i)`` for ``f: (N, 3) -> (N, 3)``."""
    degree = degree if degree is not None else Vh.spec.r + 3
    pts, w = quadrature_rule(degree)
    out = np.zeros(Vh.dim)
    for basis, cells in Vh.groups():
        for ch in _chunks(cells):
            vals = Vh.physical_values(ch, pts, basis=basis)[..., 0]      # (n, j, q, 3)
            x = Vh.physical_points(ch, pts)
            fx = np.asarray(f(x.reshape(-1, 3)), dtype=float).reshape(x.shape)
            wq = np.abs(Vh.detB[ch])[:, None] * w[None, :]
            loc = np.einsum("njqc,nqc,nq->nj", vals, fx, wq)
            np.add.at(out, Vh.dofmap.cell_dofs[ch], loc)
    return out


def assemble_system(mesh: TetMesh, r: int, params: MaterialParams, f=None,
                    simplified=False, spaces=None, degree=None) -> BlockSystem:
    """Build the full block system for degree r (and optionally the reduced element)."""
    spaces = spaces or elasticity_spaces(mesh, r, simplified)
    Sigma, Vh, Qh = spaces
    A = assemble_compliance(Sigma, params, degree)
    B = assemble_div(Sigma, Vh, degree)
    C = assemble_skw(Sigma, Qh, degree)
    load = np.zeros(Vh.dim) if f is None else assemble_load(Vh, f)
    logger.info("assembled system: %d stress, %d displacement, %d rotation dofs",
                Sigma.dim, Vh.dim, Qh.dim)
    return BlockSystem(A, B, C, load, spaces, params)


# ---------------------------------------------------------------------------
# exact (rational) local integrals

def _exact_minors(Binv, k):
    combos = _COMBOS[k]
    P = [[None] * len(combos) for _ in combos]
    for a, J in enumerate(combos):
        for b, I in enumerate(combos):
            sub = np.array([[Binv[j][i] for i in I] for j in J], dtype=object)
            P[a][b] = exact.det(sub) if k else Fraction(1)
    return P


def _scalar_parts(form: PolyForm):
    """Map (I, c) -> scalar polynomial dict alpha -> coef."""
    out = {}
    for (I, c, a), v in form.terms.items():
        out.setdefault((I, c), {})[a] = v
    return out


def _proxy_polys(form: PolyForm, Binv):
    """Exact physical proxy (as polynomials in reference coordinates).

    Returns a dict (c, p) -> polynomial dict for the proxy entry of value
    component c and proxy index p.
    """
    k = form.k
    P = _exact_minors(Binv, k)
    prox = proxy_matrix(k)
    combos = _COMBOS[k]
    parts = _scalar_parts(form)
    out = {}
    for (J, c), poly in parts.items():
        a = combos.index(J)
        for b in range(len(combos)):
            if P[a][b] == 0:
                continue
            for p in range(prox.shape[1]):
                s = int(prox[b, p])
                if s == 0:
                    continue
                tgt = out.setdefault((c, p), {})
                for al, v in poly.items():
                    tgt[al] = tgt.get(al, 0) + s * P[a][b] * v
    return out


def _integrate(poly):
    return sum((v * _simplex_monomial_integral(a) for a, v in poly.items()), Fraction(0))


def exact_skw_block(Sigma: FESpace, Qh: FESpace) -> np.ndarray:
    """Rational matrix ``(phi_j, q_i)`` from exact vertex coordinates."""
    out = np.zeros((Qh.dim, Sigma.dim), dtype=object)
    pairs = {0: ((2, 1), (1, 2)), 1: ((0, 2), (2, 0)), 2: ((1, 0), (0, 1))}
    for c in range(Sigma.mesh.n_cells):
        Bx = Sigma.exact_B(c)
        Binv = exact.inverse(Bx)
        absdet = abs(exact.det(Bx))
        sig = [_proxy_polys(s, Binv) for s in Sigma.basis(c).shapes]
        qs = [_proxy_polys(q, Binv) for q in Qh.basis(c).shapes]
        gs, gq = Sigma.dofmap.cell_dofs[c], Qh.dofmap.cell_dofs[c]
        for j, F in enumerate(sig):
            for i, a in enumerate(qs):
                tot = Fraction(0)
                for m, ((r1, c1), (r2, c2)) in pairs.items():
                    am = a.get((m, 0))
                    if not am:
                        continue
                    for (row, col), s in (((r1, c1), 1), ((r2, c2), -1)):
                        Fp = F.get((row, col))
                        if Fp:
                            tot += s * _integrate(_pmul(Fp, am))
                out[gq[i], gs[j]] += absdet * tot
    return out
