"""Adini rectangle: value and both partial derivatives at each vertex.

The local space is P3 plus ``x^3 y`` and ``x y^3``; the discrete Hessian is
the cellwise (broken) Hessian of the piecewise polynomial.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import HessianDiscretisation
from .mesh import MeshError
from .quadrature import build_layout, rect_bounds

#: Exponents (i, j) of the monomials x^i y^j spanning the local space.
MONOMIALS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2),
             (3, 0), (2, 1), (1, 2), (0, 3), (3, 1), (1, 3))
#: Reference corners, counter-clockwise from the lower-left one.
CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def monomial_derivs(P, dx=0, dy=0):
    """Derivative ``d^dx_x d^dy_y`` of every monomial at points ``P``: (n, 12)."""
    P = np.atleast_2d(P)
    out = np.zeros((len(P), len(MONOMIALS)))
    for m, (i, j) in enumerate(MONOMIALS):
        if i < dx or j < dy:
            continue
        ci = np.prod(np.arange(i - dx + 1, i + 1)) if dx else 1.0
        cj = np.prod(np.arange(j - dy + 1, j + 1)) if dy else 1.0
        out[:, m] = ci * cj * P[:, 0] ** (i - dx) * P[:, 1] ** (j - dy)
    return out


@dataclass(frozen=True)
class AdiniReferenceBasis:
    """Shape functions on [-1, 1]^2.

    Local dof ``3 k + s`` is corner ``k`` with functional value (s=0),
    d/dxi (s=1) or d/deta (s=2).  ``coef[:, i]`` holds the monomial
    coefficients of shape ``i``.
    """

    coef: np.ndarray

    def dof_functionals(self, poly_coef):
        """Apply the 12 dof functionals to polynomials given by coefficients."""
        return dof_matrix() @ poly_coef

    def eval(self, P, dx=0, dy=0):
        """Shape derivatives at points: (n, 12)."""
        return monomial_derivs(P, dx, dy) @ self.coef

    def interpolate(self, fn, grad):
        """Local dof vector of a function given by value and gradient callables."""
        v, g = fn(CORNERS), grad(CORNERS)
        return np.column_stack([v, g[:, 0], g[:, 1]]).ravel()


def dof_matrix():
    """``V[j, m]`` = dof functional j applied to monomial m."""
    rows = []
    for c in CORNERS:
        rows += [monomial_derivs(c)[0], monomial_derivs(c, 1, 0)[0], monomial_derivs(c, 0, 1)[0]]
    return np.array(rows)


def build_reference_basis():
    V = dof_matrix()
    if np.linalg.cond(V) > 1e12:
        raise np.linalg.LinAlgError("Adini interpolation matrix is singular")
    return AdiniReferenceBasis(np.linalg.solve(V, np.eye(len(MONOMIALS))))


def _corner_vertices(mesh, lo, hi):
    """``(nc, 4)`` global vertex ids ordered like :data:`CORNERS`."""
    out = np.empty((mesh.n_cells, 4), dtype=np.int64)
    for k, c in enumerate(mesh.cells):
        P = mesh.vertices[c]
        right = P[:, 0] > 0.5 * (lo[k, 0] + hi[k, 0])
        top = P[:, 1] > 0.5 * (lo[k, 1] + hi[k, 1])
        slot = np.where(top, np.where(right, 2, 3), np.where(right, 1, 0))
        if len(set(slot)) != 4:
            raise MeshError(f"cell {k} is not an axis-aligned rectangle")
        out[k, slot] = c
    return out


def vertex_dofs(mesh):
    """Global dof index of each (vertex, functional); -1 on the boundary."""
    interior = np.flatnonzero(~mesh.vertex_on_boundary)
    dof = -np.ones((mesh.n_vertices, 3), dtype=np.int64)
    dof[interior] = np.arange(3 * len(interior)).reshape(-1, 3)
    return dof


def build_adini_hd(mesh, rule="gauss-3x3-rect", basis=None):
    if not mesh.is_rectangular():
        raise MeshError("the Adini element needs axis-aligned rectangular cells")
    basis = basis or build_reference_basis()
    quad = build_layout(mesh, rule)
    lo, hi = rect_bounds(mesh)
    half = 0.5 * (hi - lo)                    # (nc, 2)
    corners = _corner_vertices(mesh, lo, hi)  # (nc, 4)
    dof = vertex_dofs(mesh)
    n = int((dof >= 0).sum())

    # reference coordinates of this cell's quadrature points (same for all cells)
    nq_cell = quad.n_points // mesh.n_cells
    ref = ((quad.points[:nq_cell] - 0.5 * (lo[0] + hi[0])) / half[0])
    shp = {d: basis.eval(ref, *d) for d in ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))}

    # per-cell scaling: local dof s of a corner maps a physical dof to a reference one
    dof_scale = np.ones((mesh.n_cells, 12))
    dof_scale[:, 1::3] = half[:, [0]]
    dof_scale[:, 2::3] = half[:, [1]]
    gdof = dof[corners].reshape(mesh.n_cells, 12)   # corner-major, functional-minor

    hx, hy = half[:, 0], half[:, 1]
    deriv_scale = {
        (0, 0): np.ones_like(hx), (1, 0): 1 / hx, (0, 1): 1 / hy,
        (2, 0): 1 / hx**2, (1, 1): 1 / (hx * hy), (0, 2): 1 / hy**2,
    }
    keep = gdof >= 0
    cell_idx, loc = np.nonzero(keep)
    cols = np.repeat(gdof[cell_idx, loc], nq_cell)
    rows = (cell_idx[:, None] * nq_cell + np.arange(nq_cell)[None, :]).ravel()
    nq = quad.n_points

    def sample(d):
        vals = shp[d][:, loc].T * (dof_scale[cell_idx, loc] * deriv_scale[d][cell_idx])[:, None]
        M = sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(nq, n))
        M.sum_duplicates()
        M.sort_indices()
        return M

    S = {d: sample(d) for d in shp}
    Pi = S[(0, 0)]
    Grad = sp.vstack([S[(1, 0)], S[(0, 1)]]).tocsr()
    HB = sp.vstack([S[(2, 0)], S[(1, 1)], S[(1, 1)], S[(0, 2)]]).tocsr()
    if not np.allclose(quad.points.reshape(mesh.n_cells, nq_cell, 2),
                       0.5 * (lo + hi)[:, None, :] + half[:, None, :] * ref[None], atol=1e-12):
        raise MeshError("quadrature layout is not a tensor rule on every cell")
    return HessianDiscretisation(
        scheme="adini", n_dofs=n, quad=quad, Pi=Pi, Grad=Grad, HB=HB,
        B_kind="identity-on-symmetric",
        meta={"vertex_dofs": dof, "corners": corners, "basis": basis},
    )


def interpolate(hd, mesh, fn, grad):
    """Global dof vector of a function vanishing (with its gradient) on the boundary."""
    dof = hd.meta["vertex_dofs"]
    interior = np.flatnonzero(dof[:, 0] >= 0)
    P = mesh.vertices[interior]
    out = np.zeros(hd.n_dofs)
    g = grad(P)
    out[dof[interior, 0]] = fn(P)
    out[dof[interior, 1]] = g[:, 0]
    out[dof[interior, 2]] = g[:, 1]
    return out
