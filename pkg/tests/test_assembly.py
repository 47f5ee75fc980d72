import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp

from elastweak.assembly import (MaterialParams, assemble_compliance, assemble_div,
                                assemble_load, assemble_mass, assemble_skw,
                                assemble_stress_gram, assemble_system, elasticity_spaces,
                                exact_skw_block)
from elastweak.fespace import interpolate
from elastweak.mesh import build_box_mesh, reference_mesh
from elastweak.polyform import V, MatrixField, PolyForm, matrix_proxy_2
from elastweak.quadrature import quadrature_rule, simplex_rule
from elastweak.solver import matrix_rank


def simplex_moment(alpha):
    # Dirichlet integral over the reference tetrahedron
    num = math.prod(math.factorial(a) for a in alpha)
    return Fraction(num, math.factorial(sum(alpha) + 3))


def const_matrix_field(F):
    return MatrixField.from_entries([[PolyForm.constant(F[i][j]) for j in range(3)]
                                     for i in range(3)])


# ---------------------------------------------------------------------------
# quadrature

def test_quadrature_volume_and_first_moment():
    pts, w = quadrature_rule(2)
    assert w.sum() == pytest.approx(1 / 6, abs=1e-15)
    assert (w * pts[:, 0]).sum() == pytest.approx(1 / 24, abs=1e-15)
    assert (w > 0).all()


@pytest.mark.parametrize("degree", [1, 3, 6, 9, 12])
def test_quadrature_exact_on_random_polynomials(degree):
    rng = np.random.default_rng(degree)
    pts, w = quadrature_rule(degree)
    for _ in range(10):
        alpha = tuple(int(a) for a in rng.multinomial(degree, [1 / 3] * 3))
        got = (w * np.prod(pts ** np.array(alpha), axis=1)).sum()
        assert got == pytest.approx(float(simplex_moment(alpha)), rel=1e-14, abs=1e-16)


def test_lower_dimensional_rules():
    pts, w = simplex_rule(2, 4)
    assert w.sum() == pytest.approx(0.5)
    assert (w * pts[:, 0] * pts[:, 1]).sum() == pytest.approx(1 / 24)
    with pytest.raises(ValueError):
        quadrature_rule(99)


# ---------------------------------------------------------------------------
# material

def test_material_validation():
    with pytest.raises(ValueError, match="mu"):
        MaterialParams(1.0, 0.0)
    with pytest.raises(ValueError, match="lambda"):
        MaterialParams(-1.0, 1.0)


def test_compliance_incompressible_limit_bounded():
    delta = np.eye(3)
    for lam in (1.0, 1e3, 1e9):
        p = MaterialParams(lam, 1.0)
        want = (1 - 3 * lam / (2 + 3 * lam)) / 2
        assert np.allclose(p.apply_compliance(delta), want * delta)
        assert np.allclose(p.apply_compliance(p.apply_stiffness(delta * 0.3)), delta * 0.3)
    assert abs(MaterialParams(1e12, 1.0).apply_compliance(delta)).max() < 1e-12


def test_compliance_reduces_to_gram():
    S, _, _ = elasticity_spaces(build_box_mesh(1), 0)
    A = assemble_compliance(S, MaterialParams(0.0, 0.5))
    G = assemble_stress_gram(S)
    assert abs(A - G).max() < 1e-14


def test_single_tet_compliance_spd_and_symmetric():
    S, _, _ = elasticity_spaces(reference_mesh(), 0)
    A = assemble_compliance(S, MaterialParams(1.3, 0.7)).toarray()
    assert A.shape == (36, 36)
    assert (A == A.T).all()
    assert np.linalg.eigvalsh(A).min() > 0


def test_general_compliance_callback_matches_isotropic():
    lam, mu = 2.0, 0.5
    c = lam / (2 * mu + 3 * lam)
    eye9 = np.eye(9)
    trace = np.outer(np.eye(3).ravel(), np.eye(3).ravel())
    Amat = (eye9 - c * trace) / (2 * mu)
    params = MaterialParams(compliance=lambda x: np.broadcast_to(Amat, (len(x), 9, 9)))
    S, _, _ = elasticity_spaces(build_box_mesh(1), 0)
    diff = assemble_compliance(S, params) - assemble_compliance(S, MaterialParams(lam, mu))
    assert abs(diff).max() < 1e-13
    bad = MaterialParams(compliance=lambda x: -np.broadcast_to(eye9, (len(x), 9, 9)))
    with pytest.raises(ValueError, match="positive definite"):
        assemble_compliance(S, bad)


# ---------------------------------------------------------------------------
# coupling blocks

def test_div_block_constant_divergence():
    mesh = reference_mesh()
    S, Vh, _ = elasticity_spaces(mesh, 0)
    g = [2, -1, 3]
    x = PolyForm.coordinate(0)
    F = MatrixField.from_entries([[x * g[c] if j == 0 else PolyForm.constant(0)
                                   for j in range(3)] for c in range(3)])
    sigma = interpolate(S, matrix_proxy_2(F, V))
    Bs = assemble_div(S, Vh) @ sigma
    # oracle: |T| g_c times the (constant) value of each displacement shape
    vals = Vh.physical_values([0], np.array([[0.25, 0.25, 0.25]]))[0, :, 0, :, 0]
    assert np.allclose(Bs[Vh.dofmap.cell_dofs[0]], mesh.volumes()[0] * vals @ g, atol=1e-14)


def test_div_free_field_gives_zero_rows():
    mesh = build_box_mesh(2)
    S, Vh, _ = elasticity_spaces(mesh, 0)
    sigma = interpolate(S, matrix_proxy_2(const_matrix_field([[1, 2, 0], [0, 3, -1], [4, 0, 2]]), V))
    assert abs(assemble_div(S, Vh) @ sigma).max() < 1e-13


def test_skw_block_symmetric_and_skew_constants():
    mesh = reference_mesh()
    S, _, Qh = elasticity_spaces(mesh, 0)
    C = assemble_skw(S, Qh)
    sym = interpolate(S, matrix_proxy_2(const_matrix_field([[1, 2, 3], [2, 5, 4], [3, 4, 6]]), V))
    assert abs(C @ sym).max() < 1e-14
    skew = interpolate(S, matrix_proxy_2(const_matrix_field([[0, -1, 0], [1, 0, 0], [0, 0, 0]]), V))
    vals = Qh.physical_values([0], np.array([[0.25, 0.25, 0.25]]))[0, :, 0, :, 0]
    want = 2 * mesh.volumes()[0] * vals[:, 2]
    assert np.allclose((C @ skew)[Qh.dofmap.cell_dofs[0]], want, atol=1e-14)


def test_exact_skw_block_matches_quadrature():
    S, _, Qh = elasticity_spaces(build_box_mesh(1), 0)
    exact = exact_skw_block(S, Qh).astype(float)
    assert np.allclose(exact, assemble_skw(S, Qh).toarray(), atol=1e-13)


@pytest.mark.parametrize("n", [1, 2])
def test_stacked_constraints_full_rank(n):
    S, Vh, Qh = elasticity_spaces(build_box_mesh(n), 0)
    B = assemble_div(S, Vh)
    assert matrix_rank(B) == Vh.dim
    stacked = sp.vstack([B, assemble_skw(S, Qh)])
    assert matrix_rank(stacked) == Vh.dim + Qh.dim


def test_load_vector():
    mesh = build_box_mesh(1)
    _, Vh, _ = elasticity_spaces(mesh, 0)
    assert not assemble_load(Vh, lambda x: np.zeros_like(x)).any()
    load = assemble_load(Vh, lambda x: np.tile([1.0, 0, 0], (len(x), 1)))
    vals = Vh.physical_values(np.arange(6), np.array([[0.25, 0.25, 0.25]]))[:, :, 0, :, 0]
    want = mesh.volumes()[:, None] * vals[:, :, 0]
    assert np.allclose(load[Vh.dofmap.cell_dofs], want, atol=1e-15)


def test_mass_matrix_K_weight():
    mesh = reference_mesh()
    _, Vh, Qh = elasticity_spaces(mesh, 0)
    # constant shapes: M = weight |T| phi phi^T, with weight 2 for K-valued forms
    xc = np.array([[0.25, 0.25, 0.25]])
    for space, weight in ((Vh, 1), (Qh, 2)):
        vals = space.physical_values([0], xc)[0, :, 0, :, 0]
        want = weight * mesh.volumes()[0] * vals @ vals.T
        assert np.allclose(assemble_mass(space).toarray(), want, atol=1e-13)


def test_system_blocks_and_symmetry():
    system = assemble_system(build_box_mesh(1), 0, MaterialParams())
    K = system.matrix
    assert K.shape == (162 + 36, 162 + 36)
    assert abs(K - K.T).max() == 0
    assert system.offsets == (0, 162, 180, 198)
    assert not system.rhs.any()
