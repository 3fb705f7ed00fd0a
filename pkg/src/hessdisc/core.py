"""Hessian discretisations: assembly, the Hessian scheme, accuracy measures.

A :class:`HessianDiscretisation` samples the three reconstructions (function,
gradient, B-Hessian) at the points of a quadrature layout.  With ``W`` the
diagonal of quadrature weights, every bilinear form of the method is a
weighted product of these sampling matrices, e.g. the stiffness matrix
``A = HB^T W HB``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .quadrature import QuadratureLayout
from .sparse import factorize, maybe_dump

B_KINDS = ("identity-on-symmetric", "trace-isotropic")
#: Component order of the 2x2 samples in ``HB``.
COMPONENTS = ("xx", "xy", "yx", "yy")


class AssemblyError(ValueError):
    pass


class DiagnosticError(RuntimeError):
    pass


@dataclass
class HessianDiscretisation:
    """Sampled reconstruction operators of a Hessian discretisation.

    ``Pi`` is ``(nq, n)``, ``Grad`` stacks the x and y components
    ``(2 nq, n)`` and ``HB`` stacks the xx, xy, yx, yy components
    ``(4 nq, n)``.  ``Lap`` (FVM only) samples the discrete Laplacian.
    """

    scheme: str
    n_dofs: int
    quad: QuadratureLayout
    Pi: sp.csr_matrix
    Grad: sp.csr_matrix
    HB: sp.csr_matrix
    B_kind: str
    Lap: sp.csr_matrix | None = None
    meta: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        nq, n = self.quad.n_points, self.n_dofs
        if self.B_kind not in B_KINDS:
            raise ValueError(f"unknown B kind {self.B_kind!r}")
        for name, M, rows in (("Pi", self.Pi, nq), ("Grad", self.Grad, 2 * nq),
                              ("HB", self.HB, 4 * nq)):
            if M.shape != (rows, n):
                raise ValueError(f"{name} has shape {M.shape}, expected {(rows, n)}")

    @property
    def hessian_norm(self):
        """'laplacian' when errors compare Delta_D with Delta (FVM), else 'hessian'."""
        return "laplacian" if self.Lap is not None else "hessian"

    def weights(self, ncomp=1):
        return np.tile(self.quad.weights, ncomp)

    def apply_B(self, xi):
        """Apply B to a field of 2x2 matrices ``(n, 2, 2)``."""
        return apply_B(self.B_kind, xi)


def apply_B(kind, xi):
    xi = np.asarray(xi, dtype=float)
    if kind == "identity-on-symmetric":
        return 0.5 * (xi + np.swapaxes(xi, -1, -2))
    tr = xi[..., 0, 0] + xi[..., 1, 1]
    out = np.zeros_like(xi)
    out[..., 0, 0] = out[..., 1, 1] = tr / math.sqrt(2.0)
    return out


def stack_matrix_field(xi):
    """``(n, 2, 2)`` -> component-stacked vector of length ``4 n``."""
    xi = np.asarray(xi)
    return np.concatenate([xi[:, 0, 0], xi[:, 0, 1], xi[:, 1, 0], xi[:, 1, 1]])


def stack_vector_field(v):
    v = np.asarray(v)
    return np.concatenate([v[:, 0], v[:, 1]])


@dataclass
class DiscreteFunction:
    hd: HessianDiscretisation
    dofs: np.ndarray

    def __post_init__(self):
        self.dofs = np.asarray(self.dofs, dtype=float)
        if self.dofs.shape != (self.hd.n_dofs,):
            raise ValueError(f"expected {self.hd.n_dofs} dofs, got {self.dofs.shape}")

    def values(self):
        return self.hd.Pi @ self.dofs

    def gradient(self):
        return (self.hd.Grad @ self.dofs).reshape(2, -1).T

    def hessian(self):
        """``(nq, 2, 2)`` samples of ``H_D^B``."""
        h = (self.hd.HB @ self.dofs).reshape(4, -1)
        return np.stack([h[:2].T, h[2:].T], axis=1)

    def energy_norm(self):
        w = self.hd.weights(4)
        h = self.hd.HB @ self.dofs
        return math.sqrt(np.dot(w, h * h))


def _weighted_gram(S, w):
    G = (S.T @ sp.diags(w) @ S).tocsr()
    G = ((G + G.T) * 0.5).tocsr()
    G.sum_duplicates()
    G.sort_indices()
    return G


def assemble_stiffness(hd):
    """``A = HB^T W HB`` (exactly symmetric)."""
    if np.any(hd.quad.weights <= 0):
        raise AssemblyError("quadrature layout has non-positive weights")
    A = _weighted_gram(hd.HB, hd.weights(4))
    maybe_dump(A, f"{hd.scheme}_stiffness_{hd.n_dofs}")
    return A


def assemble_pi_mass(hd):
    return _weighted_gram(hd.Pi, hd.weights(1))


def assemble_grad_mass(hd):
    return _weighted_gram(hd.Grad, hd.weights(2))


def assemble_load(hd, g):
    """``F_i = sum_q w_q g(x_q) (Pi)_{q,i}``."""
    vals = np.asarray(g(hd.quad.points), dtype=float)
    return hd.Pi.T @ (hd.quad.weights * vals)


def stiffness(hd):
    A = hd.cache.get("A")
    if A is None:
        A = hd.cache["A"] = assemble_stiffness(hd)
    return A


def stiffness_factor(hd):
    F = hd.cache.get("A_factor")
    if F is None:
        F = hd.cache["A_factor"] = factorize(stiffness(hd), kind="spd")
    return F


def solve_hessian_scheme(hd, F):
    """Solve ``a_D(psi, w) = (F, Pi_D w)`` for a load vector ``F``."""
    F = np.asarray(F, dtype=float)
    return DiscreteFunction(hd, stiffness_factor(hd).solve(F))


def l2_norm(hd, values, ncomp=1):
    """Discrete L2 norm of sampled values (component-stacked if ncomp > 1)."""
    return math.sqrt(np.dot(hd.weights(ncomp), np.asarray(values) ** 2))


# ---------------------------------------------------------------------------
# accuracy measures


def _max_rayleigh(M, hd, tol=1e-6, max_iter=500):
    """Largest ``lambda`` with ``M v = lambda A v`` by inverse power iteration."""
    n = hd.n_dofs
    if n == 0:
        return 0.0
    solver = stiffness_factor(hd)
    A = stiffness(hd)
    v = np.ones(n) + np.linspace(0.0, 1.0, n)  # deterministic start
    lam_old = None
    for _ in range(max_iter):
        w = solver.solve(M @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        v = w / nrm
        lam = (v @ (M @ v)) / (v @ (A @ v))
        if lam_old is not None and abs(lam - lam_old) <= tol * abs(lam):
            return lam
        lam_old = lam
    raise DiagnosticError(f"Rayleigh quotient iteration did not converge in {max_iter} steps")


def estimate_CD(hd, tol=1e-6, max_iter=500):
    """Discrete Poincare constant: max of |Pi w|/|H w| and |grad w|/|H w|."""
    lam_pi = _max_rayleigh(assemble_pi_mass(hd), hd, tol, max_iter)
    lam_gr = _max_rayleigh(assemble_grad_mass(hd), hd, tol, max_iter)
    return math.sqrt(max(lam_pi, lam_gr))


def _target_hessian(hd, phi, P):
    return stack_matrix_field(hd.apply_B(phi.hessian(P)))


def measure_SD(hd, phi):
    """Consistency measure of a smooth clamped field ``phi``.

    Minimises the sum of the *squared* three distances (a linear
    least-squares problem) and reports the sum of distances at that
    minimiser, an upper bound within a factor sqrt(3) of the exact minimum.
    """
    P = hd.quad.points
    w1, w2, w4 = hd.weights(1), hd.weights(2), hd.weights(4)
    t_val = phi.value(P)
    t_grad = stack_vector_field(phi.gradient(P))
    t_hess = _target_hessian(hd, phi, P)
    K = (assemble_pi_mass(hd) + assemble_grad_mass(hd) + stiffness(hd)).tocsc()
    rhs = hd.Pi.T @ (w1 * t_val) + hd.Grad.T @ (w2 * t_grad) + hd.HB.T @ (w4 * t_hess)
    x = factorize(K, kind="spd").solve(rhs) if hd.n_dofs else np.zeros(0)
    return (l2_norm(hd, hd.Pi @ x - t_val)
            + l2_norm(hd, hd.Grad @ x - t_grad, 2)
            + l2_norm(hd, hd.HB @ x - t_hess, 4))


def measure_WD(hd, xi, div_div_BtBxi):
    """Limit-conformity defect for a matrix field ``xi``.

    ``xi(P)`` returns ``(n, 2, 2)`` samples and ``div_div_BtBxi(P)`` the
    scalar ``H : (B^T B xi)``.  The maximum over the discrete space is the
    dual norm ``sqrt(r^T A^{-1} r)``.
    """
    if hd.n_dofs == 0:
        return 0.0
    P = hd.quad.points
    r = (hd.Pi.T @ (hd.quad.weights * div_div_BtBxi(P))
         - hd.HB.T @ (hd.weights(4) * stack_matrix_field(hd.apply_B(xi(P)))))
    z = stiffness_factor(hd).solve(r)
    return math.sqrt(max(float(r @ z), 0.0))


def measure_WD_hessian(hd, phi):
    """``W_D(H phi)``; for both B kinds ``H:(B^T B H phi)`` is the bilaplacian."""
    return measure_WD(hd, phi.hessian, phi.bilaplacian)
