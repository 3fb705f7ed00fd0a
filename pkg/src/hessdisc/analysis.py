"""Relative error norms, convergence orders and table output."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .quadrature import integrate_clamped

#: Quantities in table order.
QUANTITIES = ("y", "grad_y", "hess_y", "u", "p", "grad_p", "hess_p", "u_post")
LABELS = {
    "y": "err(y)", "grad_y": "err(grad y)", "hess_y": "err(H y)", "u": "err(u)",
    "p": "err(p)", "grad_p": "err(grad p)", "hess_p": "err(H p)", "u_post": "err(u~)",
}
LAP_LABELS = {"hess_y": "err(Lap y)", "hess_p": "err(Lap p)"}


class ReportError(ValueError):
    pass


@dataclass
class ErrorReport:
    h: float
    errors: dict
    denominators: dict
    hessian_norm: str = "hessian"

    def __post_init__(self):
        for k, v in self.errors.items():
            if not v >= 0:
                raise ReportError(f"negative or NaN error for {k}")

    def __getitem__(self, key):
        return self.errors[key]


def _rel(num_sq, den_sq, name):
    if not den_sq > 0:
        raise ReportError(f"zero denominator for {name}")
    return math.sqrt(num_sq / den_sq), math.sqrt(den_sq)


def _field_errors(hd, fn, exact, tag, out, dens):
    """L2, gradient and Hessian (or Laplacian) relative errors of one field."""
    P = hd.quad.points
    w = hd.quad.weights
    v = fn.values() - exact.value(P)
    out[tag], dens[tag] = _rel(np.dot(w, v * v), np.dot(w, exact.value(P) ** 2), tag)
    g_ex = exact.gradient(P)
    g = fn.gradient() - g_ex
    out["grad_" + tag], dens["grad_" + tag] = _rel(
        np.dot(w, (g * g).sum(1)), np.dot(w, (g_ex * g_ex).sum(1)), "grad_" + tag)
    if hd.hessian_norm == "laplacian":
        L_ex = exact.laplacian(P)
        d = hd.Lap @ fn.dofs - L_ex
        out["hess_" + tag], dens["hess_" + tag] = _rel(
            np.dot(w, d * d), np.dot(w, L_ex * L_ex), "hess_" + tag)
    else:
        H_ex = exact.hessian(P)
        d = fn.hessian() - H_ex
        out["hess_" + tag], dens["hess_" + tag] = _rel(
            np.dot(w, (d * d).sum((1, 2))), np.dot(w, (H_ex * H_ex).sum((1, 2))), "hess_" + tag)


def kink_depth(mesh, target=1.0 / 128):
    """Subdivision depth bringing sub-triangles below ``target`` in size."""
    return max(1, int(math.ceil(math.log2(max(mesh.h / target, 1.0)))))


def control_error(mesh, u_cells, cells, control, depth=None):
    """Relative L2 error of a piecewise-constant control, integrated exactly
    across the kinks of the clamped exact control."""
    if depth is None:
        depth = kink_depth(mesh)
    uc = np.zeros(mesh.n_cells)
    uc[cells] = u_cells
    num, den = integrate_clamped(
        mesh, control, lambda v, P, c: np.stack([(uc[c] - v) ** 2, v * v]), depth=depth)
    return _rel(num.sum(), den.sum(), "u")


def compute_errors(hd, sol, exact, mesh, depth=None):
    """All relative errors of a KKT solution against a :class:`Manufactured` triple."""
    errs, dens = {}, {}
    _field_errors(hd, sol.y, exact.state, "y", errs, dens)
    _field_errors(hd, sol.p, exact.adjoint, "p", errs, dens)
    errs["u"], dens["u"] = control_error(mesh, sol.u, sol.cells, exact.control, depth)
    w = hd.quad.weights
    ub = exact.control(hd.quad.points)
    d = sol.u_post - ub
    errs["u_post"], dens["u_post"] = _rel(np.dot(w, d * d), np.dot(w, ub * ub), "u_post")
    return ErrorReport(mesh.h, errs, dens, hd.hessian_norm)


def compute_eoc(h_coarse, e_coarse, h_fine, e_fine):
    if min(h_coarse, e_coarse, h_fine, e_fine) <= 0:
        raise ValueError("orders need positive mesh sizes and errors")
    if h_coarse == h_fine:
        raise ValueError("mesh sizes must differ")
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


@dataclass
class ConvergenceTable:
    """Rows of (h, error) per quantity; orders are derived."""

    quantities: tuple = QUANTITIES
    hessian_norm: str = "hessian"
    h: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    complete: bool = True

    def add(self, report):
        self.h.append(report.h)
        for q in self.quantities:
            self.errors.setdefault(q, []).append(report.errors[q])

    def __len__(self):
        return len(self.h)

    def orders(self, q):
        e = self.errors.get(q, [])
        return [None] + [compute_eoc(self.h[i - 1], e[i - 1], self.h[i], e[i])
                         for i in range(1, len(e))]

    def last_order(self, q):
        return self.orders(q)[-1]

    def label(self, q):
        if self.hessian_norm == "laplacian" and q in LAP_LABELS:
            return LAP_LABELS[q]
        return LABELS[q]


def _fmt_err(e):
    return f"{e:.6g}"


def _fmt_order(o):
    return "-" if o is None else f"{o:.4f}"


def emit_table(table, fmt="csv"):
    """Deterministic text rendering: CSV blocks per quantity or one markdown table."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for q in table.quantities:
            w.writerow([f"# {table.label(q)}"])
            w.writerow(["h", "err", "order"])
            for h, e, o in zip(table.h, table.errors.get(q, []), table.orders(q)):
                w.writerow([f"{h:.6f}", _fmt_err(e), _fmt_order(o)])
        return buf.getvalue()
    if fmt == "markdown":
        head = ["h"]
        for q in table.quantities:
            head += [table.label(q), "Order"]
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        orders = {q: table.orders(q) for q in table.quantities}
        for i, h in enumerate(table.h):
            row = [f"{h:.6f}"]
            for q in table.quantities:
                row += [_fmt_err(table.errors[q][i]), _fmt_order(orders[q][i])]
            lines.append("| " + " | ".join(row) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")


def parse_csv(text):
    """Inverse of the CSV emitter: ``{label: [(h, err, order_or_None), ...]}``."""
    out, label = {}, None
    for row in csv.reader(io.StringIO(text)):
        if not row:
            continue
        if row[0].startswith("# "):
            label = row[0][2:]
            out[label] = []
        elif row[0] != "h":
            out[label].append((float(row[0]), float(row[1]),
                               None if row[2] == "-" else float(row[2])))
    return out
