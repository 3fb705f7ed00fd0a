"""Finite-volume Hessian discretisation on Delta-adapted meshes.

One unknown per cell; cells touching the boundary are fixed to zero.  By
default a cell touches the boundary when one of its faces lies on it; the
vertex criterion is available but degrades the L2 rate on triangulations to
first order (on square meshes both coincide).  Gradient and Laplacian are
per-cell constants built from the jumps ``v_L - v_K`` across interior faces.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .core import HessianDiscretisation
from .mesh import MeshError, validate_delta_adapted
from .quadrature import build_layout


class NotDeltaAdapted(MeshError):
    def __init__(self, report):
        super().__init__("mesh is not Delta-adapted:\n" + report.summary())
        self.report = report


def active_cells(mesh, criterion="face"):
    """Cells carrying an unknown."""
    if criterion == "vertex":
        return np.flatnonzero(~mesh.cell_touches_boundary)
    if criterion == "face":
        return np.flatnonzero(~mesh.cell_has_boundary_face)
    raise ValueError(f"unknown touching criterion {criterion!r}")


def fvm_operators(mesh, dof_of_cell):
    """Sparse ``(Lap, Gx, Gy)``, each ``(n_cells, n_dofs)``.

    ``dof_of_cell[K]`` is the unknown of cell K or -1 for a zero cell.
    """
    nc = mesh.n_cells
    n = int(dof_of_cell.max()) + 1 if len(dof_of_cell) else 0
    interior = np.flatnonzero(~mesh.boundary_face)
    K, L = mesh.face_cells[interior, 0], mesh.face_cells[interior, 1]
    coef = mesh.face_area[interior] / mesh.d_sigma[interior]
    rows, cols, lap, gx, gy = [], [], [], [], []
    for me, other in ((K, L), (L, K)):
        xs = mesh.face_center[interior] - mesh.center[me]
        # delta_{me,sigma} v = v_other - v_me
        for cell, sign in ((other, 1.0), (me, -1.0)):
            d = dof_of_cell[cell]
            keep = d >= 0
            rows.append(me[keep])
            cols.append(d[keep])
            c = sign * coef[keep] / mesh.area[me[keep]]
            lap.append(c)
            gx.append(c * xs[keep, 0])
            gy.append(c * xs[keep, 1])
    rows, cols = np.concatenate(rows), np.concatenate(cols)

    def mat(v):
        M = sp.csr_matrix((np.concatenate(v), (rows, cols)), shape=(nc, n))
        M.sum_duplicates()
        M.sort_indices()
        return M

    return mat(lap), mat(gx), mat(gy)


def build_fvm_hd(mesh, criterion="face", check=True):
    """Finite-volume Hessian discretisation with ``H_D v = (Delta_D v / sqrt 2) Id``."""
    if check:
        report = validate_delta_adapted(mesh)
        if not report:
            raise NotDeltaAdapted(report)
    act = active_cells(mesh, criterion)
    dof = -np.ones(mesh.n_cells, dtype=np.int64)
    dof[act] = np.arange(len(act))
    Lap, Gx, Gy = fvm_operators(mesh, dof)
    quad = build_layout(mesh, "cell-midpoint")
    Pi = sp.csr_matrix((np.ones(len(act)), (act, np.arange(len(act)))),
                       shape=(mesh.n_cells, len(act)))
    s = Lap / math.sqrt(2.0)
    Z = sp.csr_matrix(Lap.shape)
    HB = sp.vstack([s, Z, Z, s]).tocsr()
    return HessianDiscretisation(
        scheme="fvm", n_dofs=len(act), quad=quad, Pi=Pi,
        Grad=sp.vstack([Gx, Gy]).tocsr(), HB=HB, B_kind="trace-isotropic", Lap=Lap,
        meta={"active_cells": act, "criterion": criterion},
    )
