"""Direct solution of the saddle-point system, ranks and inf-sup estimates."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import exact

logger = logging.getLogger(__name__)

DENSE_LIMIT = 5000


class SolverError(RuntimeError):
    """Raised when the system is (numerically) singular or inaccurate."""


@dataclass
class SolveReport:
    """Solution blocks and diagnostics of a saddle-point solve."""

    sigma: np.ndarray
    u: np.ndarray
    p: np.ndarray
    residual: float
    weak_symmetry: float
    min_pivot: float
    n_unknowns: int
    nnz_factor: int


def _rel_weak_symmetry(system, sigma):
    """``sup_q (sigma, q) / (||q|| ||sigma||)`` via the Q_h mass matrix."""
    from .assembly import assemble_mass, assemble_stress_gram
    Sigma, _, Qh = system.spaces
    c = system.C @ sigma
    Mq = assemble_mass(Qh)
    dual = float(np.sqrt(max(c @ spla.spsolve(Mq.tocsc(), c), 0.0))) if c.size else 0.0
    G = assemble_stress_gram(Sigma)
    norm = float(np.sqrt(max(sigma @ (G @ sigma), 0.0)))
    return dual / norm if norm > 0 else dual


def solve_saddle(system, tol: float = 1e-10, pivot_tol: float = 1e-13) -> SolveReport:
    """Sparse LU solve of the block system.

    Raises
    ------
    SolverError
        If a pivot is tiny relative to the largest one or the relative
        residual exceeds ``tol``.
    """
    K = system.matrix.tocsc()
    rhs = system.rhs
    n = K.shape[0]
    try:
        lu = spla.splu(K, permc_spec="COLAMD", options={"SymmetricMode": False})
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    piv = np.abs(lu.U.diagonal())
    scale = piv.max() if piv.size else 1.0
    min_pivot = float(piv.min() / scale) if piv.size else 0.0
    if min_pivot < pivot_tol:
        raise SolverError(f"system is singular: smallest relative pivot {min_pivot:.3e} "
                          f"at position {int(np.argmin(piv))} (broken space pairing?)")
    x = lu.solve(rhs)
    bnorm = np.linalg.norm(rhs)
    res = np.linalg.norm(K @ x - rhs)
    rel = float(res / bnorm) if bnorm > 0 else float(res)
    if rel > tol:
        raise SolverError(f"relative residual {rel:.3e} exceeds tolerance {tol:.1e}")
    o = system.offsets
    sigma, u, p = x[o[0]:o[1]], x[o[1]:o[2]], x[o[2]:o[3]]
    weak = _rel_weak_symmetry(system, sigma) if system.spaces else float("nan")
    logger.info("solve: n=%d residual=%.2e weak symmetry=%.2e", n, rel, weak)
    return SolveReport(sigma, u, p, rel, weak, min_pivot, n, lu.L.nnz + lu.U.nnz)


def matrix_rank(a, tol: float = 1e-10, exact_mode: bool = False) -> int:
    """Rank by SVD (singular values above ``tol * s_max``) or exact elimination.

    ``exact_mode`` requires an object array of rationals (or integers).
    """
    if exact_mode:
        return exact.rank(a)
    if sp.issparse(a):
        if max(a.shape) > DENSE_LIMIT:
            raise ValueError(f"matrix of shape {a.shape} exceeds the dense SVD limit")
        a = a.toarray()
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def infsup_estimate(B, Msigma, Mtarget) -> float:
    """Smallest generalized singular value of B.

    ``beta^2 = min eig(B Msigma^{-1} B^T, Mtarget)`` with ``Msigma`` the
    H(div) Gram matrix on the stress space and ``Mtarget`` the L2 Gram
    matrix on the constraint space.
    """
    B = sp.csr_matrix(B)
    Ms = sp.csc_matrix(Msigma)
    Mt = np.asarray(sp.csr_matrix(Mtarget).toarray())
    if Mt.shape[0] != B.shape[0] or Ms.shape[0] != B.shape[1]:
        raise ValueError("shape mismatch between B and the Gram matrices")
    try:
        lu = spla.splu(Ms)
    except RuntimeError as exc:
        raise ValueError(f"stress Gram matrix is singular: {exc}") from exc
    X = lu.solve(B.T.toarray())
    S = B @ X
    S = (S + S.T) / 2
    if np.linalg.eigvalsh(Mt).min() <= 0:
        raise ValueError("target Gram matrix is not positive definite")
    ev = sla.eigh(S, Mt, eigvals_only=True)
    return float(np.sqrt(max(ev.min(), 0.0)))
