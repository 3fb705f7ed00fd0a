"""Gradient-recovery Hessian discretisation on P1 triangles.

The broken gradient of a P1 function is lifted back into the P1 space by a
recovery operator ``Q_h``; the Hessian is
``sym(grad(Q_h grad u) + sigma (x) (Q_h grad u - grad u))``.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .core import HessianDiscretisation
from .mesh import MeshError
from .quadrature import TRI6_BARY, TRI7_BARY, build_layout

SIGMA_DIRECTION = np.array([1.0, 1.0]) / math.sqrt(2.0)
#: Magnitude law of the stabilisation vector; see :func:`stabilisation`.
SIGMA_SCALINGS = ("theta", "theta/h")


def p1_gradients(mesh):
    """Gradients of the three barycentric functions on each triangle: (nc, 3, 2)."""
    T = mesh.vertices[mesh.cell_array()]
    e1, e2 = T[:, 1] - T[:, 0], T[:, 2] - T[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    # rows of the inverse Jacobian give grad(lambda_1), grad(lambda_2)
    g1 = np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]
    return np.stack([-g1 - g2, g1, g2], axis=1)


def cell_gradient_operators(mesh):
    """``(Dx, Dy)``: per-cell gradient components of a P1 field, (nc, nv) each."""
    cells = mesh.cell_array()
    G = p1_gradients(mesh)
    rows = np.repeat(np.arange(mesh.n_cells), 3)
    return tuple(sp.csr_matrix((G[:, :, d].ravel(), (rows, cells.ravel())),
                               shape=(mesh.n_cells, mesh.n_vertices)) for d in (0, 1))


RECOVERY_KINDS = ("biorthogonal", "average")


def _dual_moments(mesh):
    """``M[v, K] = int_K mu_v = |K| / 3``: cell moments of the P1 dual basis."""
    cells = mesh.cell_array()
    rows = cells.ravel()
    cols = np.repeat(np.arange(mesh.n_cells), cells.shape[1])
    vals = np.repeat(mesh.area, cells.shape[1]) / cells.shape[1]
    return sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_vertices, mesh.n_cells))


def _boundary_redistribution(mesh):
    """``(nv, nv)`` map moving each boundary dual function onto the interior
    vertices nearest to it in the edge graph, in equal shares (identity on
    interior vertices).  Usually these are its interior edge neighbours; a
    corner whose neighbours all lie on the boundary looks one ring further."""
    nv = mesh.n_vertices
    bnd = mesh.vertex_on_boundary
    fv = mesh.face_vertices
    ends = (np.r_[fv[:, 0], fv[:, 1]], np.r_[fv[:, 1], fv[:, 0]])
    adj = sp.csr_matrix((np.ones(len(ends[0])), ends), shape=(nv, nv))
    if bnd.all():
        raise MeshError("mesh has no interior vertex")
    I = sp.identity(nv, format="csr")
    M = I[:, np.flatnonzero(~bnd)] @ I[np.flatnonzero(~bnd)]
    front = I[:, np.flatnonzero(bnd)]          # one column per boundary vertex
    src = np.flatnonzero(bnd)
    while len(src):
        front = (adj @ front).tocsc()
        front.data[:] = 1.0
        hit = sp.diags((~bnd).astype(float)) @ front
        done = np.diff(hit.tocsc().indptr) > 0
        H = hit.tocsc()[:, done]
        H = H @ sp.diags(1.0 / np.asarray(H.sum(axis=0)).ravel())
        M = M + H @ I[src[done]]
        front, src = front[:, ~done], src[~done]
    return M.tocsr()


def build_recovery(mesh, kind="biorthogonal"):
    """Recovery ``Q_h`` of piecewise constants into P1, as an (nv, nc) matrix.

    ``average``: area-weighted patch average at every vertex (boundary
    vertices included), ``Q g(v) = sum |K| g_K / sum |K|``.

    ``biorthogonal``: oblique projection onto the P1 functions vanishing on
    the boundary, tested with the dual basis ``int phi_i mu_j = delta_ij
    int phi_i``.  Dual functions of boundary vertices are redistributed onto
    the nearest interior vertices, so the test space still holds the
    constants.
    Rows of boundary vertices are zero.
    """
    Mu = _dual_moments(mesh)
    patch = np.asarray(Mu.sum(axis=1)).ravel()
    if np.any(patch == 0):
        raise MeshError(f"vertex {int(np.argmin(patch))} belongs to no cell")
    if kind == "average":
        R = sp.diags(1.0 / patch) @ Mu
    elif kind == "biorthogonal":
        scale = np.where(mesh.vertex_on_boundary, 0.0, 1.0 / patch)
        R = sp.diags(scale) @ _boundary_redistribution(mesh) @ Mu
    else:
        raise ValueError(f"unknown recovery kind {kind!r}")
    R = R.tocsr()
    R.eliminate_zeros()
    return R


def stabilisation(mesh, theta, scaling="theta"):
    """Per-cell stabilisation vectors (nc, 2), direction ``(1, 1)/sqrt 2``."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    if scaling == "theta":
        mag = np.full(mesh.n_cells, float(theta))
    elif scaling == "theta/h":
        mag = theta / mesh.diameter
    else:
        raise ValueError(f"unknown stabilisation scaling {scaling!r}")
    return mag[:, None] * SIGMA_DIRECTION[None, :]


def build_gr_hd(mesh, theta=3.0, scaling="theta", rule="gauss-6pt-tri", recovery="biorthogonal",
                defect_mode="pointwise"):
    if not mesh.is_triangular():
        raise MeshError("the gradient-recovery scheme needs a triangulation")
    quad = build_layout(mesh, rule)
    bary = TRI6_BARY if rule == "gauss-6pt-tri" else TRI7_BARY
    nqc = len(bary)
    cells = mesh.cell_array()
    nc, nv = mesh.n_cells, mesh.n_vertices

    interior = np.flatnonzero(~mesh.vertex_on_boundary)
    n = len(interior)
    E = sp.csr_matrix((np.ones(n), (interior, np.arange(n))), shape=(nv, n))

    # P1 evaluation at quadrature points (all vertices)
    rows = np.repeat(np.arange(nc * nqc), 3)
    L = sp.csr_matrix((np.tile(bary, (nc, 1)).ravel(), (rows, np.repeat(cells, nqc, axis=0).ravel())),
                      shape=(nc * nqc, nv))
    cell_of_q = sp.csr_matrix((np.ones(nc * nqc), (np.arange(nc * nqc), quad.cell)),
                              shape=(nc * nqc, nc))

    Dx, Dy = cell_gradient_operators(mesh)
    R = build_recovery(mesh, recovery)
    Qx, Qy = R @ Dx, R @ Dy                 # recovered gradient at vertices (nv, nv)
    grad = {0: Dx, 1: Dy}
    Q = {0: Qx, 1: Qy}
    # G[i][j] = d_j (Q grad u)_i, per cell
    G = {(i, j): grad[j] @ Q[i] for i in (0, 1) for j in (0, 1)}
    sigma = stabilisation(mesh, theta, scaling)
    sig_q = sigma[quad.cell]
    if defect_mode == "pointwise":
        defect = {j: L @ Q[j] - cell_of_q @ grad[j] for j in (0, 1)}
    elif defect_mode == "mean":
        # cell mean of the linear field Q grad u is the mean of its vertex values
        A = sp.csr_matrix((np.full(3 * nc, 1.0 / 3.0), (np.repeat(np.arange(nc), 3), cells.ravel())),
                          shape=(nc, nv))
        defect = {j: cell_of_q @ (A @ Q[j] - grad[j]) for j in (0, 1)}
    else:
        raise ValueError(f"unknown defect mode {defect_mode!r}")

    def at_q(M):
        return cell_of_q @ M

    def comp(i, j):
        # symmetrised (i, j) entry
        gi = 0.5 * (at_q(G[(i, j)]) + at_q(G[(j, i)]))
        st = 0.5 * (sp.diags(sig_q[:, i]) @ defect[j] + sp.diags(sig_q[:, j]) @ defect[i])
        return ((gi + st) @ E).tocsr()

    xx, xy, yy = comp(0, 0), comp(0, 1), comp(1, 1)
    HB = sp.vstack([xx, xy, xy, yy]).tocsr()
    Pi = (L @ E).tocsr()
    Grad = sp.vstack([L @ Qx @ E, L @ Qy @ E]).tocsr()
    for M in (Pi, Grad, HB):
        M.sum_duplicates()
        M.eliminate_zeros()
        M.sort_indices()
    return HessianDiscretisation(
        scheme="gr", n_dofs=n, quad=quad, Pi=Pi, Grad=Grad, HB=HB,
        B_kind="identity-on-symmetric",
        meta={"theta": theta, "sigma_scaling": scaling,
              "sigma_direction": SIGMA_DIRECTION.tolist(), "interior_vertices": interior,
              "recovery": recovery, "Q": R, "defect_mode": defect_mode},
    )
