"""Per-cell quadrature layouts and an adaptive cell integrator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

RULES = ("cell-midpoint", "gauss-3x3-rect", "gauss-6pt-tri", "gauss-5x5-rect", "gauss-7pt-tri")

# Degree-4 six point rule (Strang & Fix), barycentric coordinates, weights sum to 1.
_A1, _B1, _W1 = 0.445948490915965, 0.108103018168070, 0.223381589678011
_A2, _B2, _W2 = 0.091576213509771, 0.816847572980459, 0.109951743655322
TRI6_BARY = np.array([
    [_A1, _A1, _B1], [_A1, _B1, _A1], [_B1, _A1, _A1],
    [_A2, _A2, _B2], [_A2, _B2, _A2], [_B2, _A2, _A2],
])
TRI6_W = np.array([_W1] * 3 + [_W2] * 3)

# Degree-5 seven point rule (Radon).
_s15 = np.sqrt(15.0)
_a, _b = (6 - _s15) / 21, (9 + 2 * _s15) / 21
_c, _d = (6 + _s15) / 21, (9 - 2 * _s15) / 21
TRI7_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_a, _a, _b], [_a, _b, _a], [_b, _a, _a],
    [_c, _c, _d], [_c, _d, _c], [_d, _c, _c],
])
TRI7_W = np.array([9 / 40] + [(155 - _s15) / 1200] * 3 + [(155 + _s15) / 1200] * 3)


@dataclass(frozen=True)
class QuadratureLayout:
    """Quadrature points grouped by cell (cells stored contiguously)."""

    rule: str
    points: np.ndarray   # (nq, 2)
    weights: np.ndarray  # (nq,)
    cell: np.ndarray     # (nq,) owning cell of each point
    n_cells: int

    @property
    def n_points(self):
        return len(self.weights)

    def cell_sums(self, values):
        """Sum ``values`` (per point) cell by cell."""
        return np.bincount(self.cell, weights=values, minlength=self.n_cells)

    def integrate(self, values):
        return float(np.dot(self.weights, values))


def gauss_rect(n):
    """Tensor Gauss-Legendre points/weights on [-1, 1]^2."""
    x, w = leggauss(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()]), np.outer(w, w).ravel()


def build_layout(mesh, rule):
    """Quadrature layout of ``rule`` on every cell of ``mesh``."""
    nc = mesh.n_cells
    if rule == "cell-midpoint":
        return QuadratureLayout(rule, mesh.center.copy(), mesh.area.copy(),
                                np.arange(nc), nc)
    if rule.startswith("gauss-") and rule.endswith("-rect"):
        m = int(rule.split("-")[1].split("x")[0])
        if not mesh.is_rectangular():
            raise ValueError(f"rule {rule} needs an axis-aligned rectangular mesh")
        ref, w = gauss_rect(m)
        lo, hi = rect_bounds(mesh)
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        pts = mid[:, None, :] + half[:, None, :] * ref[None, :, :]
        wts = (half[:, 0] * half[:, 1])[:, None] * w[None, :]
        cell = np.repeat(np.arange(nc), len(w))
        return QuadratureLayout(rule, pts.reshape(-1, 2), wts.ravel(), cell, nc)
    if rule in ("gauss-6pt-tri", "gauss-7pt-tri"):
        if not mesh.is_triangular():
            raise ValueError(f"rule {rule} needs a triangular mesh")
        bary, w = (TRI6_BARY, TRI6_W) if rule == "gauss-6pt-tri" else (TRI7_BARY, TRI7_W)
        T = mesh.vertices[mesh.cell_array()]  # (nc, 3, 2)
        pts = np.einsum("qi,kid->kqd", bary, T)
        wts = mesh.area[:, None] * w[None, :]
        cell = np.repeat(np.arange(nc), len(w))
        return QuadratureLayout(rule, pts.reshape(-1, 2), wts.ravel(), cell, nc)
    raise ValueError(f"unknown quadrature rule {rule!r}")


def rect_bounds(mesh):
    """Lower-left and upper-right corners of each rectangular cell."""
    lo = np.array([mesh.vertices[c].min(axis=0) for c in mesh.cells])
    hi = np.array([mesh.vertices[c].max(axis=0) for c in mesh.cells])
    return lo, hi


def fan_triangles(mesh):
    """Split every cell into triangles fanned from its mass centre.

    Returns ``(T, owner)`` with ``T`` of shape (nt, 3, 2).
    """
    tris, owner = [], []
    for k, c in enumerate(mesh.cells):
        P = mesh.vertices[c]
        if len(c) == 3:
            tris.append(P)
            owner.append(k)
            continue
        g = mesh.mass_center[k]
        for i in range(len(c)):
            tris.append(np.array([g, P[i], P[(i + 1) % len(c)]]))
            owner.append(k)
    return np.array(tris), np.array(owner, dtype=np.int64)


def _tri_rule(T, f, owner):
    """Degree-5 rule on a batch of triangles; returns integrals (..., nt).

    ``f`` may return several integrands stacked along a leading axis.
    """
    pts = np.matmul(TRI7_BARY, T)
    e1, e2 = T[:, 1] - T[:, 0], T[:, 2] - T[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    vals = np.asarray(f(pts.reshape(-1, 2), np.repeat(owner, 7)))
    vals = vals.reshape(vals.shape[:-1] + (len(T), 7))
    return area * (vals @ TRI7_W), area


def _split4(T):
    a, b, c = T[:, 0], T[:, 1], T[:, 2]
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    kids = np.stack([
        np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
        np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1),
    ], 1)
    return kids.reshape(-1, 3, 2)


def integrate_cells(mesh, f, rtol=1e-10, atol=0.0, max_depth=16, min_depth=2):
    """Per-cell integrals of ``f(points, cell_index)`` by adaptive subdivision.

    Each cell is fanned into triangles, every triangle compares a degree-5
    rule against the sum over its four children and is refined while the
    difference exceeds its share of the cell budget
    ``max(atol, rtol * |cell integral|)``.  Handles integrands with kinks
    (clamped fields) without knowing where the kinks are.
    """
    T, owner = fan_triangles(mesh)
    # uniform pre-refinement so that kinks are not missed by the first samples
    for _ in range(min_depth):
        T, owner = _split4(T), np.repeat(owner, 4)
    coarse, area = _tri_rule(T, f, owner)
    cell_est = np.bincount(owner, weights=coarse, minlength=mesh.n_cells)
    scale = np.bincount(owner, weights=np.abs(coarse), minlength=mesh.n_cells)
    budget = np.maximum(atol, rtol * np.maximum(np.abs(cell_est), scale))
    cell_area = mesh.area
    out = np.zeros(mesh.n_cells)
    for depth in range(max_depth + 1):
        kids = _split4(T)
        kid_owner = np.repeat(owner, 4)
        kv, karea = _tri_rule(kids, f, kid_owner)
        fine = kv.reshape(-1, 4).sum(axis=1)
        err = np.abs(fine - coarse)
        tol = budget[owner] * np.sqrt(area / cell_area[owner])
        done = (err <= tol) | (depth == max_depth)
        np.add.at(out, owner[done], fine[done])
        if done.all():
            break
        keep = np.repeat(~done, 4)
        T, owner, coarse, area = kids[keep], kid_owner[keep], kv[keep], karea[keep]
    return out


def average_cells(mesh, f, **kw):
    """Cell averages ``(1/|K|) int_K f`` of a field ``f(points)``."""
    return integrate_cells(mesh, lambda P, c: f(P), **kw) / mesh.area


class ClampedField:
    """``clip(inner(P), lo, hi)`` with a smooth ``inner``; kinks are tracked exactly."""

    def __init__(self, inner, lo, hi):
        if lo > hi:
            raise ValueError("lo must not exceed hi")
        self.inner = inner
        self.lo = lo
        self.hi = hi

    def __call__(self, P):
        return np.clip(self.inner(P), self.lo, self.hi)


def _clip_poly(P, s, t):
    """Split a convex polygon with linear data ``s`` at level ``t``.

    Returns ``((P_below, s_below), (P_above, s_above))``; empty parts are None.
    """
    below, above = [], []
    n = len(P)
    for i in range(n):
        p, q = P[i], P[(i + 1) % n]
        sp_, sq = s[i], s[(i + 1) % n]
        if sp_ <= t:
            below.append((p, sp_))
        if sp_ >= t:
            above.append((p, sp_))
        if (sp_ - t) * (sq - t) < 0:
            lam = (t - sp_) / (sq - sp_)
            x = p + lam * (q - p)
            below.append((x, t))
            above.append((x, t))

    def pack(lst):
        if len(lst) < 3:
            return None
        return np.array([a for a, _ in lst]), np.array([b for _, b in lst])

    return pack(below), pack(above)


def _per_cell(vals, owner, n):
    vals = np.atleast_2d(vals)
    out = np.stack([np.bincount(owner, weights=v, minlength=n) for v in vals])
    return out[0] if len(out) == 1 else out


def integrate_clamped(mesh, field, phi=None, depth=3):
    """Per-cell integrals of ``phi(clamp(s), P, cell)`` for a :class:`ClampedField`.

    Sub-triangles crossed by a switch level of the linear interpolant of
    ``s`` are cut along it, and each piece is integrated with the regime it
    belongs to, so the kink costs O(r^5) per cut triangle rather than O(r^3).
    ``phi`` may return several integrands stacked along a leading axis.
    """
    if phi is None:
        phi = lambda v, P, c: v  # noqa: E731
    T, owner = fan_triangles(mesh)
    for _ in range(depth):
        T, owner = _split4(T), np.repeat(owner, 4)
    nt = len(T)
    sv = field.inner(T.reshape(-1, 2)).reshape(nt, 3)
    lo, hi = field.lo, field.hi
    cut = np.zeros(nt, dtype=bool)
    for t in (lo, hi):
        cut |= (sv.min(axis=1) < t) & (sv.max(axis=1) > t)

    def smooth(v, P, c):
        return phi(np.clip(v, lo, hi), P, c)

    out = 0.0
    keep = ~cut
    if keep.any():
        vals, _ = _tri_rule(T[keep], lambda P, c: smooth(field.inner(P), P, c), owner[keep])
        out = out + _per_cell(vals, owner[keep], mesh.n_cells)

    # cut triangles: gather pieces with a forced regime
    pieces, piece_owner, regime = [], [], []
    for i in np.flatnonzero(cut):
        parts = [(T[i], sv[i])]
        lower, rest = [], []
        for P, s in parts:
            b, a = _clip_poly(P, s, lo)
            if b is not None:
                lower.append(b)
            if a is not None:
                rest.append(a)
        middle, upper = [], []
        for P, s in rest:
            b, a = _clip_poly(P, s, hi)
            if b is not None:
                middle.append(b)
            if a is not None:
                upper.append(a)
        for group, tag in ((lower, 0), (middle, 1), (upper, 2)):
            for P, _ in group:
                for j in range(1, len(P) - 1):
                    pieces.append((P[0], P[j], P[j + 1]))
                    piece_owner.append(owner[i])
                    regime.append(tag)
    if pieces:
        Tp = np.array(pieces)
        po = np.array(piece_owner, dtype=np.int64)
        reg = np.repeat(np.array(regime), 7)

        def forced(P, c):
            v = field.inner(P)
            v = np.where(reg == 0, lo, np.where(reg == 2, hi, v))
            return phi(v, P, c)

        vals, _ = _tri_rule(Tp, forced, po)
        out = out + _per_cell(vals, po, mesh.n_cells)
    return out
