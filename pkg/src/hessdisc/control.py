"""Piecewise-constant controls, the discrete KKT system and its PDAS solver."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .core import DiscreteFunction, assemble_load, assemble_pi_mass, stiffness, stiffness_factor
from .quadrature import ClampedField, integrate_cells, integrate_clamped
from .sparse import solve_block_2x2

log = logging.getLogger(__name__)

UNBOUNDED = 1e300


class PdasNonConvergence(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class OcpProblem:
    """Distributed control problem data.

    ``omega`` is ``None`` for control on the whole domain, otherwise a
    boolean mask over mesh cells (controls act through ``u * chi_omega``).
    """

    alpha: float
    lo: float
    hi: float
    f: Callable
    y_d: Callable
    u_d: Callable
    omega: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.lo > self.hi:
            raise ValueError("lower bound exceeds upper bound")

    def control_cells(self, mesh):
        if self.omega is None:
            return np.arange(mesh.n_cells)
        mask = np.asarray(self.omega, dtype=bool)
        if mask.shape != (mesh.n_cells,):
            raise ValueError("omega mask must have one entry per cell")
        return np.flatnonzero(mask)


def clamp(s, a, b):
    """Projection onto ``[a, b]``; works elementwise on arrays."""
    if a > b:
        raise ValueError(f"empty interval [{a}, {b}]")
    if np.isscalar(s):
        return min(b, max(a, s))
    return np.minimum(b, np.maximum(a, s))


def project_Ph(g, mesh, depth=6, rtol=1e-11):
    """Cell averages of ``g``.

    A :class:`~hessdisc.quadrature.ClampedField` is integrated kink-aware;
    any other field through adaptive cubature.
    """
    if isinstance(g, ClampedField):
        return integrate_clamped(mesh, g, depth=depth) / mesh.area
    return integrate_cells(mesh, lambda P, c: g(P), rtol=rtol) / mesh.area


def control_coupling(hd, cells):
    """``B[i, j] = int_{K_j} Pi_D phi_i`` for the control cells ``cells``."""
    q = hd.quad
    col = -np.ones(q.n_cells, dtype=np.int64)
    col[cells] = np.arange(len(cells))
    sel = col[q.cell] >= 0
    S = sp.csr_matrix((q.weights[sel], (np.flatnonzero(sel), col[q.cell[sel]])),
                      shape=(q.n_points, len(cells)))
    return (hd.Pi.T @ S).tocsr()


@dataclass
class KktSolution:
    y: DiscreteFunction
    p: DiscreteFunction
    u: np.ndarray            # per control cell
    cells: np.ndarray        # control cells (indices into the mesh)
    u_post: np.ndarray       # post-processed control at quadrature points
    iterations: int
    history: list = field(default_factory=list)
    residual: float = 0.0    # max_c |u_c - clamp(candidate_c)| at return

    def control_full(self, n_cells):
        """Control as a per-mesh-cell array (zero off omega)."""
        out = np.zeros(n_cells)
        out[self.cells] = self.u
        return out


class KktSystem:
    """Assembled operators of the discrete optimality system."""

    def __init__(self, problem, hd, mesh, ud_depth=4):
        self.problem = problem
        self.hd = hd
        self.mesh = mesh
        self.A = stiffness(hd)
        self.M = assemble_pi_mass(hd)
        self.cells = problem.control_cells(mesh)
        self.B = control_coupling(hd, self.cells)
        self.area = mesh.area[self.cells]
        self.F = assemble_load(hd, problem.f)
        self.G = assemble_load(hd, problem.y_d)
        self.ud = project_Ph(problem.u_d, mesh, depth=ud_depth)[self.cells]

    def candidate(self, p):
        """Unclamped control ``P_h u_d - (1/alpha) P_h Pi_D p`` per control cell."""
        return self.ud - (self.B.T @ p) / (self.area * self.problem.alpha)

    def state(self, u):
        """Solve the state equation for a given control (per control cell)."""
        return stiffness_factor(self.hd).solve(self.F + self.B @ u)

    def cost(self, u):
        """Reduced cost, up to the constant ``1/2 |y_d|^2``."""
        y = self.state(u)
        track = 0.5 * y @ (self.M @ y) - y @ self.G
        reg = 0.5 * self.problem.alpha * np.sum(self.area * (u - self.ud) ** 2)
        return track + reg


def _sets(t, a, b):
    return t < a, t > b


def pdas_solve(problem, hd, mesh, max_iter=100, system=None):
    """Primal-dual active set iteration for the discrete KKT system.

    Starts from ``p = 0`` (all cells inactive unless ``P_h u_d`` violates a
    bound) and stops as soon as the active sets repeat.
    """
    kkt = system or KktSystem(problem, hd, mesh)
    a, b, alpha = problem.lo, problem.hi, problem.alpha
    n = hd.n_dofs
    p = np.zeros(n)
    t = kkt.candidate(p)
    act_a, act_b = _sets(t, a, b)
    history = [(int(act_a.sum()), int(act_b.sum()))]
    A, M, B = kkt.A, kkt.M, kkt.B
    for it in range(1, max_iter + 1):
        inact = ~(act_a | act_b)
        BI = B[:, inact]
        coupling = (BI @ sp.diags(1.0 / (alpha * kkt.area[inact])) @ BI.T).tocsr()
        u_fixed = np.where(act_a, a, 0.0) + np.where(act_b, b, 0.0)
        rhs1 = kkt.F + B @ u_fixed + BI @ kkt.ud[inact]
        y, p = solve_block_2x2(A, coupling, -M, A, rhs1, -kkt.G)
        t = kkt.candidate(p)
        new_a, new_b = _sets(t, a, b)
        history.append((int(new_a.sum()), int(new_b.sum())))
        log.debug("pdas iteration %d: |A_a|=%d |A_b|=%d", it, new_a.sum(), new_b.sum())
        if np.array_equal(new_a, act_a) and np.array_equal(new_b, act_b):
            u = clamp(t, a, b)
            sol = KktSolution(DiscreteFunction(hd, y), DiscreteFunction(hd, p), u,
                              kkt.cells, None, it, history)
            sol.u_post = post_process(problem, mesh, sol.p, hd, ud_cells=kkt.ud, cells=kkt.cells)
            sol.residual = optimality_residual(sol, problem, hd, mesh, system=kkt)
            return sol
        act_a, act_b = new_a, new_b
    raise PdasNonConvergence(f"active sets did not settle in {max_iter} iterations", history)


def post_process(problem, mesh, p, hd, ud_cells=None, cells=None):
    """Post-processed control ``clamp(P_h u_d - Pi_D p / alpha)`` at quadrature points.

    Points outside the control region get 0.
    """
    if cells is None:
        cells = problem.control_cells(mesh)
    if ud_cells is None:
        ud_cells = project_Ph(problem.u_d, mesh)[cells]
    ud_full = np.zeros(mesh.n_cells)
    ud_full[cells] = ud_cells
    on = np.zeros(mesh.n_cells, dtype=bool)
    on[cells] = True
    q = hd.quad
    vals = clamp(ud_full[q.cell] - (hd.Pi @ p.dofs) / problem.alpha, problem.lo, problem.hi)
    return np.where(on[q.cell], vals, 0.0)


def optimality_residual(sol, problem, hd, mesh, system=None):
    """max_c |u_c - clamp(P_h u_d - P_h Pi_D p / alpha)|."""
    kkt = system or KktSystem(problem, hd, mesh)
    t = kkt.candidate(sol.p.dofs)
    return float(np.max(np.abs(sol.u - clamp(t, problem.lo, problem.hi)), initial=0.0))
