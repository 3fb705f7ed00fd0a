import numpy as np
import pytest
from hypothesis import given, strategies as st

from hessdisc.adini import (CORNERS, MONOMIALS, build_adini_hd, build_reference_basis,
                            dof_matrix, interpolate, monomial_derivs)
from hessdisc.core import assemble_stiffness
from hessdisc.mesh import MeshError, gen_square_mesh, gen_triangular_mesh
from hessdisc.quadrature import gauss_rect

BASIS = build_reference_basis()
coeffs = st.lists(st.floats(-3, 3, allow_nan=False), min_size=12, max_size=12).map(np.array)


def _poly(c):
    return (lambda P: monomial_derivs(P) @ c,
            lambda P: np.column_stack([monomial_derivs(P, 1, 0) @ c, monomial_derivs(P, 0, 1) @ c]))


def test_nodal_duality():
    assert np.allclose(dof_matrix() @ BASIS.coef, np.eye(12), atol=1e-12)


@pytest.mark.parametrize("idx", [MONOMIALS.index((3, 1)), MONOMIALS.index((0, 0))])
def test_basis_monomials_reproduced(idx):
    c = np.zeros(12)
    c[idx] = 1.0
    fn, grad = _poly(c)
    P = gauss_rect(4)[0]
    assert np.allclose(BASIS.eval(P) @ BASIS.interpolate(fn, grad), fn(P), atol=1e-12)


def test_x2y2_not_in_space():
    fn = lambda P: P[:, 0] ** 2 * P[:, 1] ** 2  # noqa: E731
    grad = lambda P: np.column_stack([2 * P[:, 0] * P[:, 1] ** 2, 2 * P[:, 0] ** 2 * P[:, 1]])  # noqa: E731
    centre = np.zeros((1, 2))
    assert abs(BASIS.eval(centre) @ BASIS.interpolate(fn, grad) - fn(centre)[0]) > 0.1


@given(coeffs)
def test_local_exactness(c):
    fn, grad = _poly(c)
    P = gauss_rect(3)[0]
    d = BASIS.interpolate(fn, grad)
    assert np.allclose(BASIS.eval(P) @ d, fn(P), atol=1e-10 * (1 + np.abs(c).sum()))
    for dx, dy in ((2, 0), (1, 1), (0, 2)):
        assert np.allclose(BASIS.eval(P, dx, dy) @ d, monomial_derivs(P, dx, dy) @ c,
                           atol=1e-9 * (1 + np.abs(c).sum()))


def test_dof_count():
    assert build_adini_hd(gen_square_mesh(2)).n_dofs == 3
    m = gen_square_mesh(5, "l-shape")
    assert build_adini_hd(m).n_dofs == 3 * int((~m.vertex_on_boundary).sum())


def test_cubic_reproduced_on_interior_cells():
    m = gen_square_mesh(6)
    hd = build_adini_hd(m)
    v = interpolate(hd, m, lambda P: P[:, 0] ** 3,
                    lambda P: np.column_stack([3 * P[:, 0] ** 2, 0 * P[:, 0]]))
    inner = ~m.vertex_on_boundary[hd.meta["corners"]].any(axis=1)
    sel = inner[hd.quad.cell]
    H = (hd.HB @ v).reshape(4, -1)
    x = hd.quad.points[:, 0]
    assert np.allclose(H[0][sel], 6 * x[sel], atol=1e-10)
    assert np.allclose(H[1][sel], 0, atol=1e-10) and np.allclose(H[3][sel], 0, atol=1e-10)
    assert np.allclose((hd.Pi @ v)[sel], x[sel] ** 3, atol=1e-12)


def _local_dofs(hd, mesh, v):
    """Reference-cell dof vectors (nc, 12) of a global dof vector."""
    dof, corners = hd.meta["vertex_dofs"], hd.meta["corners"]
    full = np.concatenate([v, [0.0]])
    vals = full[dof[corners]]  # (nc, 4, 3); index -1 hits the appended zero
    P = mesh.vertices[corners]
    half = 0.5 * (P.max(axis=1) - P.min(axis=1))
    vals[:, :, 1] *= half[:, None, 0]
    vals[:, :, 2] *= half[:, None, 1]
    return vals.reshape(len(corners), 12)


def test_continuity_at_vertices(rng):
    m = gen_square_mesh(5)
    hd = build_adini_hd(m)
    v = rng.standard_normal(hd.n_dofs)
    loc = _local_dofs(hd, m, v)
    ref = gauss_rect(3)[0]
    # the manual reconstruction agrees with the assembled sampling
    assert np.allclose((BASIS.eval(ref) @ loc.T).T.ravel(), hd.Pi @ v, atol=1e-12)
    at_corners = (BASIS.eval(CORNERS) @ loc.T).T  # (nc, 4)
    seen = {}
    for k, cs in enumerate(hd.meta["corners"]):
        for j, vert in enumerate(cs):
            if vert in seen:
                assert abs(seen[vert] - at_corners[k, j]) <= 1e-10
            seen[vert] = at_corners[k, j]


@pytest.mark.parametrize("domain", ["unit-square", "l-shape"])
@pytest.mark.parametrize("n", [2, 3, 6])
def test_stiffness_spd(domain, n, rng):
    A = assemble_stiffness(build_adini_hd(gen_square_mesh(n, domain)))
    assert (A - A.T).nnz == 0
    assert np.all(np.linalg.eigvalsh(A.toarray()) > 0)


def test_rejects_triangles():
    with pytest.raises(MeshError):
        build_adini_hd(gen_triangular_mesh(3))
