"""Polygonal meshes of 2D domains.

A :class:`PolytopalMesh` stores cells as counter-clockwise vertex loops and
derives all geometric quantities needed by the schemes: cell measures, mass
centres, finite-volume centres ``x_K``, diameters, inradii, face normals and
the two-point distances ``d_sigma``.
"""
from __future__ import annotations

import glob as _glob
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

DOMAINS = ("unit-square", "l-shape")
FAMILIES = ("uniform-square", "uniform-square-L", "triangular-file", "triangular-delaunay")

_DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


class MeshError(ValueError):
    """Malformed or inconsistent mesh input."""


class MeshParseError(MeshError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedRefinement(MeshError):
    pass


def _polygon_area_centroid(P):
    x, y = P[:, 0], P[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    a = 0.5 * cr.sum()
    cx = ((x + xn) * cr).sum() / (6 * a)
    cy = ((y + yn) * cr).sum() / (6 * a)
    return a, np.array([cx, cy])


def circumcenter(a, b, c):
    a, b, c = (np.asarray(p, float) for p in (a, b, c))
    d = 2 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
    if d == 0:
        raise MeshError("degenerate triangle")
    sa, sb, sc = a @ a, b @ b, c @ c
    ux = (sa * (b[1] - c[1]) + sb * (c[1] - a[1]) + sc * (a[1] - b[1])) / d
    uy = (sa * (c[0] - b[0]) + sb * (a[0] - c[0]) + sc * (b[0] - a[0])) / d
    return np.array([ux, uy])


@dataclass(frozen=True)
class MeshFamilyDescriptor:
    """Identifies one member of a refinement family.

    Structured families use ``n = base * 2**level`` subdivisions per unit
    length; file families resolve ``pattern.format(level=...)``.
    """

    family: str
    level: int = 0
    domain: str = "unit-square"
    base: int = 2
    pattern: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown mesh family {self.family!r}")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")

    @property
    def n(self):
        return self.base * 2 ** self.level

    def next(self):
        return MeshFamilyDescriptor(self.family, self.level + 1, self.domain,
                                    self.base, self.pattern)


class PolytopalMesh:
    """Polygonal mesh with the geometric data of a two-point FV discretisation.

    Parameters
    ----------
    vertices : (nv, 2) array
    cells : sequence of vertex-index sequences (any orientation)
    centers : "mass", "circumcenter" or an explicit (nc, 2) array of ``x_K``.
        ``"circumcenter"`` applies to triangles only; other cells keep their
        mass centre.
    faces : optional (nf, 4) int array ``v1 v2 cellL cellR`` to check the
        derived connectivity against (used by the file loader).
    """

    def __init__(self, vertices, cells, centers="mass", faces=None, domain=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.domain = domain
        cells = [np.asarray(c, dtype=np.int64) for c in cells]
        if not cells:
            raise MeshError("mesh has no cells")
        nv = len(self.vertices)
        for k, c in enumerate(cells):
            if len(c) < 3:
                raise MeshError(f"cell {k} has fewer than 3 vertices")
            if c.min() < 0 or c.max() >= nv:
                raise MeshError(f"cell {k} references a missing vertex")

        nc = len(cells)
        self.area = np.empty(nc)
        self.mass_center = np.empty((nc, 2))
        for k, c in enumerate(cells):
            a, g = _polygon_area_centroid(self.vertices[c])
            if a < 0:
                c = c[::-1]
                cells[k] = c
                a = -a
            if a <= 0:
                raise MeshError(f"cell {k} has zero area")
            self.area[k] = a
            self.mass_center[k] = g
        self.cells = cells
        self.n_cells = nc
        self.n_vertices = nv
        self._build_faces()
        if faces is not None:
            self._check_faces(np.asarray(faces, dtype=np.int64))
        self._set_centers(centers)
        self._build_geometry()

    # -- topology -------------------------------------------------------
    def _build_faces(self):
        edge_index = {}
        fv, fc = [], []
        cell_faces = []
        for k, c in enumerate(self.cells):
            cf = []
            for i in range(len(c)):
                a, b = int(c[i]), int(c[(i + 1) % len(c)])
                key = (a, b) if a < b else (b, a)
                f = edge_index.get(key)
                if f is None:
                    f = len(fv)
                    edge_index[key] = f
                    fv.append((a, b))  # oriented ccw w.r.t. the first cell
                    fc.append([k, -1])
                else:
                    if fc[f][1] != -1:
                        raise MeshError(f"edge {key} shared by more than two cells")
                    fc[f][1] = k
                cf.append(f)
            cell_faces.append(np.array(cf, dtype=np.int64))
        self.face_vertices = np.array(fv, dtype=np.int64)
        self.face_cells = np.array(fc, dtype=np.int64)
        self.cell_faces = cell_faces
        self.n_faces = len(fv)
        self.boundary_face = self.face_cells[:, 1] < 0
        self.vertex_on_boundary = np.zeros(self.n_vertices, dtype=bool)
        self.vertex_on_boundary[self.face_vertices[self.boundary_face].ravel()] = True
        used = np.zeros(self.n_vertices, dtype=bool)
        for c in self.cells:
            used[c] = True
        if not used.all():
            raise MeshError(f"vertex {int(np.flatnonzero(~used)[0])} belongs to no cell")
        self.cell_touches_boundary = np.array(
            [self.vertex_on_boundary[c].any() for c in self.cells])
        self.cell_has_boundary_face = np.zeros(self.n_cells, dtype=bool)
        self.cell_has_boundary_face[self.face_cells[self.boundary_face, 0]] = True

    def _check_faces(self, faces):
        if faces.shape != (self.n_faces, 4):
            raise MeshError(
                f"file lists {len(faces)} faces, cell connectivity implies {self.n_faces}")
        lookup = {}
        for f, (a, b) in enumerate(self.face_vertices):
            lookup[(min(a, b), max(a, b))] = f
        for i, (a, b, cl, cr) in enumerate(faces):
            f = lookup.get((min(a, b), max(a, b)))
            if f is None:
                raise MeshError(f"face {i} ({a},{b}) is not an edge of any cell")
            if {int(cl), int(cr)} != set(int(x) for x in self.face_cells[f]):
                raise MeshError(f"face {i} ({a},{b}) has inconsistent adjacent cells")

    # -- geometry -------------------------------------------------------
    def _set_centers(self, centers):
        if isinstance(centers, str):
            xc = self.mass_center.copy()
            if centers == "circumcenter":
                for k, c in enumerate(self.cells):
                    if len(c) == 3:
                        xc[k] = circumcenter(*self.vertices[c])
            elif centers != "mass":
                raise ValueError(f"unknown centre rule {centers!r}")
            self.center_rule = centers
        else:
            xc = np.asarray(centers, float)
            if xc.shape != (self.n_cells, 2):
                raise ValueError("explicit centres must have shape (n_cells, 2)")
            self.center_rule = "explicit"
        self.center = xc

    def _build_geometry(self):
        V = self.vertices
        p, q = V[self.face_vertices[:, 0]], V[self.face_vertices[:, 1]]
        t = q - p
        self.face_area = np.hypot(t[:, 0], t[:, 1])
        if np.any(self.face_area <= 0):
            raise MeshError("zero-length face")
        self.face_tangent = t / self.face_area[:, None]
        # ccw loop of face_cells[:,0] => outward normal is the tangent rotated clockwise
        self.face_normal = np.column_stack([self.face_tangent[:, 1], -self.face_tangent[:, 0]])
        self.face_center = 0.5 * (p + q)

        fc = self.face_cells
        dist = np.zeros((self.n_faces, 2))
        for s in (0, 1):
            k = fc[:, s]
            ok = k >= 0
            rel = self.face_center[ok] - self.center[k[ok]]
            dist[ok, s] = np.abs(np.einsum("ij,ij->i", rel, self.face_normal[ok]))
        self.face_cell_dist = dist
        self.d_sigma = dist.sum(axis=1)

        self.diameter = np.empty(self.n_cells)
        self.inradius = np.empty(self.n_cells)
        for k, c in enumerate(self.cells):
            P = V[c]
            diff = P[:, None, :] - P[None, :, :]
            self.diameter[k] = np.sqrt((diff ** 2).sum(-1)).max()
            f = self.cell_faces[k]
            rel = self.mass_center[k] - self.face_center[f]
            self.inradius[k] = np.abs(np.einsum("ij,ij->i", rel, self.face_normal[f])).min()
        self.h = float(self.diameter.max())
        self.eta = float((self.diameter / self.inradius).max())

        # n_{K,sigma} = sign * n_sigma
        self.cell_face_sign = [np.where(self.face_cells[f, 0] == k, 1.0, -1.0)
                               for k, f in enumerate(self.cell_faces)]

    # -- convenience ----------------------------------------------------
    @property
    def total_area(self):
        return float(self.area.sum())

    def is_rectangular(self, tol=1e-12):
        """True if every cell is an axis-aligned rectangle."""
        for c in self.cells:
            if len(c) != 4:
                return False
            P = self.vertices[c]
            xs, ys = np.unique(np.round(P[:, 0], 12)), np.unique(np.round(P[:, 1], 12))
            if len(xs) != 2 or len(ys) != 2:
                return False
            for i in range(4):
                e = P[(i + 1) % 4] - P[i]
                if abs(e[0]) > tol * max(1, abs(e[1])) and abs(e[1]) > tol * max(1, abs(e[0])):
                    return False
        return True

    def is_triangular(self):
        return all(len(c) == 3 for c in self.cells)

    def cell_array(self):
        """Cells as a dense (nc, k) array; requires uniform cell size."""
        sizes = {len(c) for c in self.cells}
        if len(sizes) != 1:
            raise MeshError("mixed cell types")
        return np.array(self.cells, dtype=np.int64)

    def closed_surface_defect(self):
        """max_K |sum_sigma |sigma| n_{K,sigma}|  (zero for closed cells)."""
        out = 0.0
        for k, f in enumerate(self.cell_faces):
            s = (self.cell_face_sign[k][:, None] * self.face_normal[f]
                 * self.face_area[f][:, None]).sum(axis=0)
            out = max(out, float(np.abs(s).max()))
        return out

    def __repr__(self):
        return (f"PolytopalMesh(cells={self.n_cells}, faces={self.n_faces}, "
                f"vertices={self.n_vertices}, h={self.h:.6f})")


# ---------------------------------------------------------------------------
# generators


def _domain_boxes(domain):
    if domain == "unit-square":
        return (0.0, 0.0, 1.0), [(0, 0)]
    if domain == "l-shape":
        # (-1,1)^2 minus [0,1)x(-1,0]: unit blocks at (-1,-1), (-1,0), (0,0)
        return (-1.0, -1.0, 2.0), [(0, 0), (0, 1), (1, 1)]
    raise ValueError(f"unknown domain {domain!r}")


def _structured_grid(n, domain):
    """Vertices and active unit-square cell indices of a structured grid."""
    (x0, y0, length), blocks = _domain_boxes(domain)
    m = int(round(n * length))
    active = np.zeros((m, m), dtype=bool)  # [j, i]
    for bi, bj in blocks:
        active[bj * n:(bj + 1) * n, bi * n:(bi + 1) * n] = True
    used = np.zeros((m + 1, m + 1), dtype=bool)
    for j, i in zip(*np.nonzero(active)):
        used[j:j + 2, i:i + 2] = True
    vid = -np.ones((m + 1, m + 1), dtype=np.int64)
    vid[used] = np.arange(used.sum())
    jj, ii = np.nonzero(used)
    verts = np.column_stack([x0 + ii / n, y0 + jj / n])
    return verts, vid, active


def gen_square_mesh(n, domain="unit-square"):
    """Uniform mesh of squares of side ``1/n``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    verts, vid, active = _structured_grid(n, domain)
    cells = [(vid[j, i], vid[j, i + 1], vid[j + 1, i + 1], vid[j + 1, i])
             for j, i in zip(*np.nonzero(active))]
    return PolytopalMesh(verts, cells, centers="mass", domain=domain)


def gen_triangular_mesh(n, domain="unit-square"):
    """Squares of side ``1/n`` each split by the SW-NE diagonal."""
    if n < 2:
        raise ValueError("n must be at least 2")
    verts, vid, active = _structured_grid(n, domain)
    cells = []
    for j, i in zip(*np.nonzero(active)):
        a, b, c, d = vid[j, i], vid[j, i + 1], vid[j + 1, i + 1], vid[j + 1, i]
        cells.append((a, b, c))
        cells.append((a, c, d))
    return PolytopalMesh(verts, cells, centers="mass", domain=domain)


def offset_row_points(n):
    """Point set for acute triangulations of the unit square.

    Rows ``y = j/n``; even rows at ``x = i/n``, odd rows shifted by half a
    spacing with the two boundary points added.
    """
    pts = []
    for j in range(n + 1):
        y = j / n
        if j % 2 == 0:
            xs = [i / n for i in range(n + 1)]
        else:
            xs = [0.0] + [(i + 0.5) / n for i in range(n)] + [1.0]
        pts.extend((x, y) for x in xs)
    return np.array(pts)


def gen_delaunay_triangular_mesh(n):
    """Delaunay triangulation of :func:`offset_row_points`, circumcentre ``x_K``."""
    from scipy.spatial import Delaunay

    if n < 2:
        raise ValueError("n must be at least 2")
    pts = offset_row_points(n)
    tri = Delaunay(pts, qhull_options="Qbb Qc")
    simplices = tri.simplices
    # drop slivers on the hull (collinear boundary points)
    keep = []
    for s in simplices:
        P = pts[s]
        a = 0.5 * abs((P[1, 0] - P[0, 0]) * (P[2, 1] - P[0, 1]) - (P[2, 0] - P[0, 0]) * (P[1, 1] - P[0, 1]))
        if a > 1e-14:
            keep.append(sorted(int(v) for v in s))
    keep.sort()
    return PolytopalMesh(pts, keep, centers="circumcenter", domain="unit-square")


def build_mesh(desc):
    """Mesh for a family descriptor."""
    if desc.family in ("uniform-square", "uniform-square-L"):
        domain = "l-shape" if desc.family == "uniform-square-L" else desc.domain
        return gen_square_mesh(desc.n, domain)
    if desc.family == "triangular-delaunay":
        if desc.pattern is None:
            return gen_triangular_mesh(desc.n, desc.domain)
        return _load_family_level(desc)
    if desc.family == "triangular-file":
        return _load_family_level(desc)
    raise ValueError(desc.family)


def _load_family_level(desc):
    pattern = desc.pattern or os.path.join(_DATA_DIR, "tri_delta_{level}.msh")
    path = pattern.format(level=desc.level)
    if not os.path.exists(path):
        raise UnsupportedRefinement(f"no mesh file for level {desc.level}: {path}")
    return load_mesh(path)


def refine(desc):
    """Descriptor and mesh of the next level of a family."""
    nxt = desc.next()
    return nxt, build_mesh(nxt)


def fixture_family(glob_pattern=None):
    """Sorted list of mesh files forming a refinement family."""
    if glob_pattern is None:
        glob_pattern = os.path.join(_DATA_DIR, "tri_delta_*.msh")
    paths = _glob.glob(glob_pattern)

    def key(p):
        nums = re.findall(r"\d+", os.path.basename(p))
        return (int(nums[-1]) if nums else 0, p)

    return sorted(paths, key=key)


# ---------------------------------------------------------------------------
# text format


def load_mesh(path, centers="circumcenter"):
    """Read the whitespace-separated mesh format.

    ``cells nv nf nc`` header, then ``v x y``, ``f v1 v2 cellL cellR`` and
    ``c v1 ... vk`` records, 0-based indices, ``-1`` marking boundary faces.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    verts, faces, cells = [], [], []
    header = None
    for lineno, raw in enumerate(lines, start=1):
        tok = raw.split()
        if not tok:
            continue
        try:
            if header is None:
                if tok[0] != "cells" or len(tok) != 4:
                    raise MeshParseError("expected header 'cells nv nf nc'", lineno)
                header = tuple(int(t) for t in tok[1:])
            elif tok[0] == "v":
                if len(tok) != 3:
                    raise MeshParseError("vertex record needs 2 coordinates", lineno)
                verts.append((float(tok[1]), float(tok[2])))
            elif tok[0] == "f":
                if len(tok) != 5:
                    raise MeshParseError("face record needs 4 integers", lineno)
                faces.append(tuple(int(t) for t in tok[1:]))
            elif tok[0] == "c":
                if len(tok) < 4:
                    raise MeshParseError("cell record needs at least 3 vertices", lineno)
                cells.append(tuple(int(t) for t in tok[1:]))
            else:
                raise MeshParseError(f"unknown record type {tok[0]!r}", lineno)
        except ValueError as exc:
            if isinstance(exc, MeshParseError):
                raise
            raise MeshParseError(str(exc), lineno) from exc
    if header is None:
        raise MeshParseError("empty file", 1)
    nv, nf, nc = header
    if (len(verts), len(faces), len(cells)) != (nv, nf, nc):
        raise MeshParseError(
            f"header announces {header}, found {(len(verts), len(faces), len(cells))}")
    faces = np.array(faces, dtype=np.int64).reshape(-1, 4)
    if faces.size and (faces[:, :2].max() >= nv or faces[:, :2].min() < 0):
        raise MeshError("face references a missing vertex")
    if faces.size and faces[:, 2:].max() >= nc:
        raise MeshError("face references a missing cell")
    return PolytopalMesh(np.array(verts), cells, centers=centers, faces=faces)


def save_mesh(mesh, path):
    """Write ``mesh`` in the format read by :func:`load_mesh`."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"cells {mesh.n_vertices} {mesh.n_faces} {mesh.n_cells}\n")
        for x, y in mesh.vertices:
            fh.write(f"v {float(x)!r} {float(y)!r}\n")
        for (a, b), (cl, cr) in zip(mesh.face_vertices, mesh.face_cells):
            fh.write(f"f {a} {b} {cl} {cr}\n")
        for c in mesh.cells:
            fh.write("c " + " ".join(str(int(v)) for v in c) + "\n")


# ---------------------------------------------------------------------------
# Delta-adaptedness


@dataclass
class ValidationReport:
    orthogonality_defect: np.ndarray
    d_sigma: np.ndarray
    h: float
    tol: float = 1e-10
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures

    def __bool__(self):
        return self.passed

    def summary(self):
        if self.passed:
            return "mesh is Delta-adapted"
        head = "; ".join(self.failures[:5])
        more = f" (+{len(self.failures) - 5} more)" if len(self.failures) > 5 else ""
        return f"mesh is not Delta-adapted: {head}{more}"


def validate_delta_adapted(mesh, tol=1e-10):
    """Check the two-point orthogonality condition face by face.

    Interior faces: ``x_L - x_K`` must be normal to the face.  Boundary faces:
    the orthogonal projection of ``x_K`` must land on the face.  Every face
    needs ``d_sigma > tol * h``.
    """
    fc = mesh.face_cells
    defect = np.zeros(mesh.n_faces)
    interior = ~mesh.boundary_face
    dx = mesh.center[fc[interior, 1]] - mesh.center[fc[interior, 0]]
    defect[interior] = np.abs(np.einsum("ij,ij->i", dx, mesh.face_tangent[interior]))
    # boundary: projection of x_K onto the face line must stay within the face
    bnd = np.flatnonzero(mesh.boundary_face)
    p = mesh.vertices[mesh.face_vertices[bnd, 0]]
    s = np.einsum("ij,ij->i", mesh.center[fc[bnd, 0]] - p, mesh.face_tangent[bnd])
    L = mesh.face_area[bnd]
    defect[bnd] = np.maximum(0.0, np.maximum(-s, s - L))
    lim = tol * mesh.h
    failures = []
    for f in np.flatnonzero(defect > lim):
        failures.append(f"face {f}: orthogonality defect {defect[f]:.3e}")
    for f in np.flatnonzero(mesh.d_sigma < lim):
        failures.append(f"face {f}: d_sigma={mesh.d_sigma[f]:.3e}")
    # centres on the wrong side of an interior face
    if interior.any():
        n = mesh.face_normal[interior]
        sK = np.einsum("ij,ij->i", mesh.face_center[interior] - mesh.center[fc[interior, 0]], n)
        sL = np.einsum("ij,ij->i", mesh.center[fc[interior, 1]] - mesh.face_center[interior], n)
        for f in np.flatnonzero(interior)[(sK < -lim) | (sL < -lim)]:
            failures.append(f"face {f}: centres not separated by the face")
    return ValidationReport(defect, mesh.d_sigma.copy(), mesh.h, tol, failures)
