import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hessdisc.core import assemble_stiffness, l2_norm
from hessdisc.fvm import NotDeltaAdapted, active_cells, build_fvm_hd, fvm_operators
from hessdisc.mesh import (PolytopalMesh, fixture_family, gen_square_mesh, gen_triangular_mesh,
                           load_mesh)

finite = st.floats(-10, 10, allow_nan=False)


def _all_cells(m):
    return fvm_operators(m, np.arange(m.n_cells))


def _deep_interior(m):
    """Cells whose neighbours have no boundary face either."""
    bad = m.cell_has_boundary_face.copy()
    fc = m.face_cells[~m.boundary_face]
    for a, b in ((0, 1), (1, 0)):
        np.logical_or.at(bad, fc[:, a], m.cell_has_boundary_face[fc[:, b]])
    return np.flatnonzero(~bad)


@given(finite, finite, finite)
def test_gradient_exact_on_affine_data(a1, a2, c):
    m = gen_square_mesh(5)
    lap, gx, gy = _all_cells(m)
    v = a1 * m.center[:, 0] + a2 * m.center[:, 1] + c
    inner = np.flatnonzero(~m.cell_has_boundary_face)
    assert np.allclose((gx @ v)[inner], a1, atol=1e-10 * (1 + abs(a1)))
    assert np.allclose((gy @ v)[inner], a2, atol=1e-10 * (1 + abs(a2)))


def test_laplacian_exact_on_quadratic():
    m = gen_square_mesh(6)
    lap, _, _ = _all_cells(m)
    inner = np.flatnonzero(~m.cell_has_boundary_face)
    assert np.allclose((lap @ m.center[:, 0] ** 2)[inner], 2.0)
    assert np.allclose((lap @ (m.center ** 2).sum(1))[inner], 4.0)


def test_constant_has_zero_gradient_and_laplacian():
    m = gen_square_mesh(6)
    hd = build_fvm_hd(m)
    v = np.ones(hd.n_dofs)
    deep = _deep_interior(m)
    assert deep.size
    assert np.allclose((hd.Lap @ v)[deep], 0, atol=1e-10)
    g = (hd.Grad @ v).reshape(2, -1)
    assert np.allclose(g[:, deep], 0, atol=1e-10)


@pytest.mark.parametrize("mesh", ["squares", "fixture"])
def test_stencil_sign_pattern(mesh):
    m = gen_square_mesh(5) if mesh == "squares" else load_mesh(fixture_family()[1])
    hd = build_fvm_hd(m)
    act = hd.meta["active_cells"]
    L = hd.Lap.tocsr()
    for j, K in enumerate(act):
        faces = m.cell_faces[K]
        self_coef = -np.sum(m.face_area[faces] / (m.area[K] * m.d_sigma[faces]))
        assert math.isclose(L[K, j], self_coef, rel_tol=1e-12)
        row = L.getrow(K).toarray().ravel()
        row[j] = 0
        assert np.all(row >= 0)


def test_boundary_cells_carry_no_unknown():
    m = load_mesh(fixture_family()[0])
    hd = build_fvm_hd(m)
    act = hd.meta["active_cells"]
    assert not np.any(m.cell_has_boundary_face[act])
    assert hd.n_dofs == len(act)
    vert = active_cells(m, "vertex")
    assert set(vert) <= set(act)


def test_face_and_vertex_criteria_agree_on_squares():
    m = gen_square_mesh(8)
    assert np.array_equal(active_cells(m, "face"), active_cells(m, "vertex"))


@pytest.mark.parametrize("mesh", ["squares", "fixture"])
def test_hessian_norm_equals_laplacian_norm(mesh, rng):
    m = gen_square_mesh(7) if mesh == "squares" else load_mesh(fixture_family()[1])
    hd = build_fvm_hd(m)
    A = assemble_stiffness(hd)
    for _ in range(5):
        v = rng.standard_normal(hd.n_dofs)
        assert math.isclose(v @ (A @ v), l2_norm(hd, hd.Lap @ v) ** 2, rel_tol=1e-12)
    assert hd.B_kind == "trace-isotropic"


@given(st.integers(0, 2 ** 31 - 1))
def test_flux_telescoping(seed):
    """sum_K |K| Delta_K v = 0: interior fluxes cancel pairwise."""
    for m in (gen_square_mesh(6), load_mesh(fixture_family()[0])):
        hd = build_fvm_hd(m)
        v = np.random.default_rng(seed).standard_normal(hd.n_dofs)
        assert abs(m.area @ (hd.Lap @ v)) <= 1e-10 * np.abs(hd.Lap @ v).max()


def test_midpoint_quadrature_and_cell_indicator():
    m = gen_square_mesh(4)
    hd = build_fvm_hd(m)
    assert hd.quad.rule == "cell-midpoint"
    assert np.allclose(hd.quad.points, m.center)
    act = hd.meta["active_cells"]
    assert np.array_equal((hd.Pi @ np.arange(1, hd.n_dofs + 1))[act], np.arange(1, hd.n_dofs + 1))


def test_rejects_non_delta_adapted_mesh():
    t = gen_triangular_mesh(3)
    m = PolytopalMesh(t.vertices, t.cells, centers="circumcenter")
    with pytest.raises(NotDeltaAdapted) as exc:
        build_fvm_hd(m)
    assert not exc.value.report.passed
