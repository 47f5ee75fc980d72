from fractions import Fraction

import numpy as np
import pytest
import sympy

from elastweak.fespace import (FESpace, SpaceSpec, build_local_basis, dof_matrix,
                               evaluate_field, interpolate, local_dimension, plus_dimension,
                               whitney_spec)
from elastweak.mesh import LOCAL_EDGES, build_box_mesh, reference_mesh
from elastweak.polyform import (K, R, V, MatrixField, PolyForm, koszul, matrix_proxy_2,
                                random_polyform, wedge)
from elastweak.verify import frame_face_dof_matrix


def gauss_1d(n=6):
    t, w = np.polynomial.legendre.leggauss(n)
    return (t + 1) / 2, w / 2


def test_local_dimensions_stated():
    assert local_dimension(SpaceSpec("P", 1, 2, V)) == 36
    assert local_dimension(SpaceSpec("P1minus_plus_L1", 1, 1, V)) == 48
    assert local_dimension(SpaceSpec("P1minus_L2", 1, 2, V)) == 24


def test_P0_plus_two_forms_have_dimension_four():
    # oracle: rank of the coefficient vectors of P0 L2 together with kappa(P0 L3)
    dx = [PolyForm.dx(i) for i in range(3)]
    gens = [wedge(dx[1], dx[2]), wedge(dx[0], dx[2]), wedge(dx[0], dx[1]),
            koszul(wedge(wedge(dx[0], dx[1]), dx[2]))]
    keys = sorted({key for g in gens for key in g.terms})
    mat = sympy.Matrix([[g.terms.get(key, 0) for key in keys] for g in gens])
    assert mat.rank() == 4
    assert local_dimension(SpaceSpec("Pplus", 0, 2, R)) == 4


@pytest.mark.parametrize("r,k", [(0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (2, 1)])
def test_plus_dimension_formula(r, k):
    assert local_dimension(SpaceSpec("Pplus", r, k, R)) == plus_dimension(r, k)


def test_whitney_edge_functions():
    basis = build_local_basis(whitney_spec(1))
    assert basis.dimension == 6
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    t, w = gauss_1d()
    for j, shape in enumerate(basis.shapes):
        for e, (a, b) in enumerate(LOCAL_EDGES):
            tangent = verts[b] - verts[a]
            integral = sum(wq * float(shape.evaluate(verts[a] + tq * tangent, [tangent])[0])
                           for tq, wq in zip(t, w))
            assert integral == pytest.approx(float(j == e), abs=1e-13)


def test_P1_two_forms_face_moments():
    basis = build_local_basis(SpaceSpec("P", 1, 2, R))
    assert basis.dimension == 12
    assert [d.d for d in basis.dofs] == [2] * 12
    assert all(len([d for d in basis.dofs if d.entity == f]) == 3 for f in range(4))


@pytest.mark.parametrize("spec", [SpaceSpec("P", 1, 2, V), SpaceSpec("Pplus", 1, 1, K),
                                  SpaceSpec("P", 2, 0, R), SpaceSpec("Pplus", 0, 3, V),
                                  SpaceSpec("P", 2, 2, V), SpaceSpec("P1minus_L2", 1, 2, V)])
def test_duality_exact(spec):
    basis = build_local_basis(spec)
    vand = dof_matrix(basis.dofs, basis.shapes)
    assert (vand == np.eye(basis.dimension, dtype=int)).all()


def test_reduced_face_functionals_unisolvent():
    basis = build_local_basis(SpaceSpec("P1minus_L2", 1, 2, V))
    mat = frame_face_dof_matrix(basis)
    assert mat.shape == (24, 24)
    s = np.linalg.svd(mat, compute_uv=False)
    assert s[-1] > 1e-8 * s[0]


def test_spec_validation():
    with pytest.raises(ValueError):
        SpaceSpec("P1minus_L2", 1, 1, V)
    with pytest.raises(ValueError):
        SpaceSpec("Q", 1, 1, V)
    with pytest.raises(ValueError):
        SpaceSpec("P", -1, 1, V)


def test_global_dimensions_unit_box():
    m = build_box_mesh(1)
    assert FESpace(SpaceSpec("P", 0, 3, V), m).dim == 18
    assert FESpace(SpaceSpec("P", 0, 3, K), m).dim == 18
    assert FESpace(SpaceSpec("P", 1, 2, V), m).dim == 18 * 9


def test_shared_dofs_and_interior_dofs():
    m = build_box_mesh(1)
    S = FESpace(SpaceSpec("P", 2, 2, V), m)
    counts = np.bincount(S.dofmap.cell_dofs.ravel(), minlength=S.dim)
    desc = S.basis(0).descriptors()
    interior = [i for i, (d, _, _) in enumerate(desc) if d == 3]
    assert interior and (counts[S.dofmap.cell_dofs[:, interior]] == 1).all()
    face = [i for i, (d, _, _) in enumerate(desc) if d == 2]
    assert set(counts[S.dofmap.cell_dofs[:, face]].ravel()) == {1, 2}


def test_interpolating_a_member_is_identity():
    mesh = reference_mesh()
    rng = np.random.default_rng(0)
    for spec in (SpaceSpec("P", 1, 2, V), SpaceSpec("Pplus", 1, 1, R)):
        S = FESpace(spec, mesh)
        coeffs = [Fraction(int(c)) for c in rng.integers(-5, 6, S.dim)]
        member = PolyForm.zero(3, spec.k, spec.values)
        for c, shape in zip(coeffs, S.basis(0).shapes):
            member = member + shape * c
        local = interpolate(S, member)[S.dofmap.cell_dofs[0]]
        assert np.allclose(local, [float(c) for c in coeffs], atol=1e-13)


def test_interpolation_preserves_dofs_only():
    mesh = reference_mesh()
    S = FESpace(SpaceSpec("P", 1, 2, V), mesh)
    rng = np.random.default_rng(1)
    w = random_polyform(rng, 2, V, 3)
    coeffs = interpolate(S, w)[S.dofmap.cell_dofs[0]]
    exact = dof_matrix(S.basis(0).dofs, [w])[:, 0].astype(float)
    assert np.allclose(coeffs, exact, atol=1e-13)
    proj = PolyForm.zero(3, 2, V)
    for c, shape in zip(coeffs, S.basis(0).shapes):
        proj = proj + shape * Fraction(c)
    assert not (proj - w).is_zero(tol=1e-6)


def test_constant_and_linear_fields_reproduced():
    mesh = build_box_mesh(2)
    S = FESpace(SpaceSpec("P", 1, 2, V), mesh)
    x = [PolyForm.coordinate(i) for i in range(3)]
    entries = [[x[0] + PolyForm.constant(1), x[1] * 2, PolyForm.constant(3)],
               [x[2], x[0] - x[1], PolyForm.constant(-1)],
               [PolyForm.constant(0), x[2] * 3, x[0] + x[1]]]
    F = MatrixField.from_entries(entries)
    coeffs = interpolate(S, matrix_proxy_2(F, V))
    rng = np.random.default_rng(2)
    for _ in range(5):
        p = rng.random(3)
        c = mesh.locate(p)
        got = evaluate_field(S, coeffs, p, c)
        want = np.array([[float(F.entry(i, j).evaluate(p)[0]) for j in range(3)]
                         for i in range(3)])
        assert np.allclose(got, want, atol=1e-12)
    U = FESpace(SpaceSpec("P", 0, 3, V), mesh)
    vol = wedge(wedge(PolyForm.dx(0), PolyForm.dx(1)), PolyForm.dx(2))
    const = PolyForm.from_components([vol * 2, vol * -1, vol * 5], V)
    got = evaluate_field(U, interpolate(U, const), [0.3, 0.6, 0.1], mesh.locate([0.3, 0.6, 0.1]))
    assert np.allclose(got[:, 0], [2, -1, 5])


def test_normal_continuity_across_faces():
    mesh = build_box_mesh(2)
    S = FESpace(SpaceSpec("P", 1, 2, V), mesh)
    coeffs = np.random.default_rng(3).standard_normal(S.dim)
    interior = np.nonzero(~mesh.boundary_faces)[0]
    for f in interior[::7]:
        c0, c1 = mesh.face_cells[f]
        a, b, c = mesh.vertices[mesh.faces[f]]
        n = np.cross(b - a, c - a)
        p = (a + b + c) / 3 + 0.1 * (b - a) - 0.05 * (c - a)
        jump = evaluate_field(S, coeffs, p, c0) @ n - evaluate_field(S, coeffs, p, c1) @ n
        assert np.abs(jump).max() < 1e-12


def test_callable_and_exact_interpolation_agree():
    from elastweak.verify import form_callable
    mesh = build_box_mesh(2)
    S = FESpace(SpaceSpec("P", 1, 2, V), mesh)
    w = random_polyform(np.random.default_rng(4), 2, V, 3)
    assert np.allclose(interpolate(S, w), interpolate(S, form_callable(w), 8), atol=1e-12)


def test_reduced_spaces_on_mesh():
    mesh = build_box_mesh(1)
    S = FESpace(SpaceSpec("P1minus_L2", 1, 2, V), mesh)
    assert S.local_dim == 24
    assert S.dim == len(mesh.faces) * 6
