import numpy as np
import pytest
import scipy.sparse as sp

from elastweak.assembly import (BlockSystem, MaterialParams, assemble_div, assemble_mass,
                                assemble_stress_gram, assemble_system, elasticity_spaces)
from elastweak.fespace import FESpace, whitney_spec
from elastweak.mesh import build_box_mesh
from elastweak.solver import SolverError, infsup_estimate, matrix_rank, solve_saddle
from elastweak.verify import global_d_matrix, infsup_for_mesh, manufactured_case, solve_case


def test_zero_data_zero_solution():
    system = assemble_system(build_box_mesh(2), 0, MaterialParams())
    rep = solve_saddle(system)
    assert not rep.sigma.any() and not rep.u.any() and not rep.p.any()


def test_patch_test_linear_stress():
    # lambda = 0, mu = 1/2 makes A the identity; the stress is linear and lies in Sigma_h
    case = manufactured_case("poly-linear", lam=0.0, mu=0.5)
    _, rep, err = solve_case(case, build_box_mesh(2), 0)
    assert err.err_sigma < 1e-10
    assert err.err_div < 1e-10
    assert rep.residual < 1e-10


@pytest.mark.parametrize("case_id", ["trig", "poly-quadratic"])
def test_weak_symmetry_after_solve(case_id):
    _, rep, _ = solve_case(manufactured_case(case_id), build_box_mesh(2), 0)
    assert rep.weak_symmetry <= 1e-8
    assert rep.residual <= 1e-10


def test_solve_is_deterministic():
    case = manufactured_case("trig")
    a = solve_case(case, build_box_mesh(2), 0)[1]
    b = solve_case(case, build_box_mesh(2), 0)[1]
    assert (a.sigma == b.sigma).all() and (a.u == b.u).all() and (a.p == b.p).all()


def test_broken_pairing_raises():
    system = assemble_system(build_box_mesh(1), 0, MaterialParams())
    # duplicated rotation constraints make the multiplier block rank deficient
    broken = BlockSystem(system.A, system.B, sp.vstack([system.C, system.C]).tocsr(),
                         system.f)
    with pytest.raises(SolverError, match="pivot"):
        solve_saddle(broken)


def test_rank_of_identity():
    assert matrix_rank(np.eye(5)) == 5
    assert matrix_rank(sp.identity(5)) == 5
    assert matrix_rank(np.zeros((3, 4))) == 0
    assert matrix_rank(np.eye(5, dtype=int).astype(object), exact_mode=True) == 5


def test_whitney_ranks_on_unit_box():
    mesh = build_box_mesh(1)
    W = [FESpace(whitney_spec(k), mesh) for k in range(4)]
    assert [w.dim for w in W] == [8, 19, 18, 6]
    d0 = global_d_matrix(W[0], W[1])
    d2 = global_d_matrix(W[2], W[3])
    # contractible domain: kernel of d0 is the constants, d2 is onto
    assert matrix_rank(d0, exact_mode=True) == 7
    assert matrix_rank(d2, exact_mode=True) == 6
    assert matrix_rank(global_d_matrix(W[0], W[1], exact_mode=False)) == 7


def test_infsup_rejects_indefinite_target():
    S, Vh, _ = elasticity_spaces(build_box_mesh(1), 0)
    B = assemble_div(S, Vh)
    Ms = assemble_stress_gram(S, with_div=True)
    with pytest.raises(ValueError, match="positive definite"):
        infsup_estimate(B, Ms, -assemble_mass(Vh))
    with pytest.raises(ValueError, match="shape"):
        infsup_estimate(B, Ms, assemble_mass(Vh)[:3, :3])


def test_infsup_matches_dense_svd_oracle():
    # oracle: singular values of Mt^{-1/2} B Ms^{-1/2} by dense eigendecompositions
    S, Vh, _ = elasticity_spaces(build_box_mesh(1), 0)
    B = assemble_div(S, Vh).toarray()
    Ms = assemble_stress_gram(S, with_div=True).toarray()
    Mt = assemble_mass(Vh).toarray()

    def inv_sqrt(m):
        w, v = np.linalg.eigh(m)
        return v @ np.diag(w ** -0.5) @ v.T
    s = np.linalg.svd(inv_sqrt(Mt) @ B @ inv_sqrt(Ms), compute_uv=False)
    assert infsup_estimate(B, Ms, Mt) == pytest.approx(s.min(), rel=1e-8)


def test_infsup_positive_and_dropping_skew_is_larger():
    mesh = build_box_mesh(1)
    beta = infsup_for_mesh(mesh, 0)
    assert beta > 1e-3
    S, Vh, _ = elasticity_spaces(mesh, 0)
    beta_div = infsup_estimate(assemble_div(S, Vh), assemble_stress_gram(S, with_div=True),
                               assemble_mass(Vh))
    assert beta_div >= beta - 1e-12


def test_infsup_uniform_in_h(infsup_stable):
    assert min(infsup_stable) > 1e-3
    spread = (max(infsup_stable) - min(infsup_stable)) / max(infsup_stable)
    assert spread < 0.20, f"beta over n=1..4: {infsup_stable}"


def test_infsup_negative_control_collapses(infsup_control):
    assert infsup_control[0] / max(infsup_control[-1], 1e-300) > 2


def test_infsup_levels_after_single_cube(infsup_stable):
    # diagnostic for the uniformity check: the one-cube mesh is the outlier
    tail = infsup_stable[1:]
    assert (max(tail) - min(tail)) / max(tail) < 0.20
    assert all(a >= b for a, b in zip(infsup_stable, infsup_stable[1:]))
