import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from hessdisc.adini import build_adini_hd
from hessdisc.core import DiscreteFunction
from hessdisc.fvm import build_fvm_hd
from hessdisc.gr import build_gr_hd
from hessdisc.control import (UNBOUNDED, KktSystem, OcpProblem, PdasNonConvergence, clamp,
                              optimality_residual, pdas_solve, post_process, project_Ph)
from hessdisc.manufactured import example1
from hessdisc.mesh import gen_square_mesh, gen_triangular_mesh
from hessdisc.study import RunConfig, run_study

reals = st.floats(-1e4, 1e4, allow_nan=False)

SETUPS = {
    "fvm": lambda: (gen_square_mesh(8), build_fvm_hd),
    "adini": lambda: (gen_square_mesh(4), build_adini_hd),
    "gr": lambda: (gen_triangular_mesh(8), build_gr_hd),
}


def setup(scheme):
    m, build = SETUPS[scheme]()
    return m, build(m)


def zero(P):
    return np.zeros(len(P))


# ---------------------------------------------------------------- clamp

@pytest.mark.parametrize("s, expected", [(-900, -750), (-100, -100), (0, -50)])
def test_clamp_examples(s, expected):
    assert clamp(s, -750, -50) == expected


def test_clamp_rejects_empty_interval():
    with pytest.raises(ValueError):
        clamp(0.0, 1.0, -1.0)


@given(reals, reals, reals)
def test_clamp_in_interval_and_idempotent(s, a, b):
    a, b = min(a, b), max(a, b)
    c = clamp(s, a, b)
    assert a <= c <= b and clamp(c, a, b) == c
    v = clamp(np.array([s, c]), a, b)
    assert v[0] == c and v[1] == c


# ---------------------------------------------------------------- P_h

def test_project_constant():
    m = gen_triangular_mesh(3)
    assert np.allclose(project_Ph(lambda P: np.full(len(P), 2.5), m), 2.5, rtol=1e-13)


def test_project_linear_average():
    m = gen_square_mesh(5)
    avg = project_Ph(lambda P: P[:, 0], m)
    assert math.isclose(avg[0], 0.1, rel_tol=1e-12)
    assert np.allclose(avg, m.mass_center[:, 0], rtol=1e-12)


def _clamped_average_oracle(x0, x1, y0, y1, a=-750.0, b=-50.0, alpha=1e-3):
    """Average of clamp(-sin^2(pi x) sin^2(pi y)/alpha, a, b) over a box.

    For fixed x the inner integral in y is done exactly between the points
    where the unclamped field crosses a or b."""
    def inner(x):
        A = math.sin(math.pi * x) ** 2 / alpha
        br = [y0, y1]
        for c in (-a, -b):
            if A > c:
                t = math.asin(math.sqrt(c / A)) / math.pi
                br += [t, 1.0 - t]
        br = sorted({min(max(v, y0), y1) for v in br})
        F = lambda y: -A * (y / 2 - math.sin(2 * math.pi * y) / (4 * math.pi))  # noqa: E731
        tot = 0.0
        for lo, hi in zip(br[:-1], br[1:]):
            v = -A * math.sin(math.pi * 0.5 * (lo + hi)) ** 2
            tot += a * (hi - lo) if v < a else b * (hi - lo) if v > b else F(hi) - F(lo)
        return tot
    v, _ = quad(inner, x0, x1, epsabs=1e-12, epsrel=1e-12, limit=200)
    return v / ((x1 - x0) * (y1 - y0))


def test_project_example1_control_against_oracle():
    m = gen_square_mesh(8)
    avg = project_Ph(example1().control, m)
    ref = np.empty(m.n_cells)
    for k, c in enumerate(m.cells):
        lo, hi = m.vertices[c].min(0), m.vertices[c].max(0)
        ref[k] = _clamped_average_oracle(lo[0], hi[0], lo[1], hi[1])
    assert np.max(np.abs(avg / ref - 1.0)) < 1e-8


# ---------------------------------------------------------------- problem data

def test_problem_validation():
    with pytest.raises(ValueError):
        OcpProblem(alpha=0.0, lo=0, hi=1, f=zero, y_d=zero, u_d=zero)
    with pytest.raises(ValueError):
        OcpProblem(alpha=1.0, lo=1, hi=0, f=zero, y_d=zero, u_d=zero)


def test_control_subset_mask():
    m = gen_square_mesh(4)
    mask = np.zeros(m.n_cells, dtype=bool)
    mask[:5] = True
    pr = OcpProblem(1.0, -1, 1, zero, zero, zero, omega=mask)
    assert list(pr.control_cells(m)) == [0, 1, 2, 3, 4]
    with pytest.raises(ValueError):
        OcpProblem(1.0, -1, 1, zero, zero, zero, omega=mask[:3]).control_cells(m)


# ---------------------------------------------------------------- PDAS

@pytest.mark.parametrize("scheme", sorted(SETUPS))
def test_unbounded_converges_in_one_iteration(scheme):
    m, hd = setup(scheme)
    ex = example1(lo=-UNBOUNDED, hi=UNBOUNDED)
    sol = pdas_solve(ex.problem, hd, m)
    assert sol.iterations == 1
    assert sol.history == [(0, 0), (0, 0)]
    assert sol.residual < 1e-10


@pytest.mark.parametrize("scheme", sorted(SETUPS))
def test_fixed_point_property(scheme):
    m, hd = setup(scheme)
    pr = example1().problem
    kkt = KktSystem(pr, hd, m)
    sol = pdas_solve(pr, hd, m, system=kkt)
    t = kkt.candidate(sol.p.dofs)
    assert np.array_equal(sol.u == pr.lo, t < pr.lo)
    assert np.array_equal(sol.u == pr.hi, t > pr.hi)
    assert sol.residual < 1e-10
    assert optimality_residual(sol, pr, hd, m) == sol.residual
    assert np.all((sol.u >= pr.lo) & (sol.u <= pr.hi))


def test_matches_dense_monolithic_solve():
    """(y, p, u) from PDAS solve the full KKT system with the final active sets."""
    m = gen_square_mesh(4)
    hd = build_adini_hd(m)
    pr = example1().problem
    kkt = KktSystem(pr, hd, m)
    sol = pdas_solve(pr, hd, m, system=kkt)
    n, nc = hd.n_dofs, len(kkt.cells)
    A, M, B = kkt.A.toarray(), kkt.M.toarray(), kkt.B.toarray()
    t = kkt.candidate(sol.p.dofs)
    act = (t < pr.lo) | (t > pr.hi)
    K = np.zeros((2 * n + nc, 2 * n + nc))
    rhs = np.zeros(2 * n + nc)
    K[:n, :n], K[:n, 2 * n:] = A, -B
    rhs[:n] = kkt.F
    K[n:2 * n, :n], K[n:2 * n, n:2 * n] = -M, A
    rhs[n:2 * n] = -kkt.G
    K[2 * n:, 2 * n:] = np.eye(nc)
    inact = np.flatnonzero(~act)
    K[2 * n + inact, n:2 * n] = B[:, inact].T / (pr.alpha * kkt.area[inact, None])
    rhs[2 * n:] = np.where(t < pr.lo, pr.lo, np.where(t > pr.hi, pr.hi, kkt.ud))
    z = np.linalg.solve(K, rhs)
    assert act.any() and (~act).any()
    assert np.allclose(z[:n], sol.y.dofs, rtol=1e-9, atol=1e-12 * np.abs(z[:n]).max())
    assert np.allclose(z[n:2 * n], sol.p.dofs, rtol=1e-9, atol=1e-12 * np.abs(z[n:2 * n]).max())
    assert np.allclose(z[2 * n:], sol.u, rtol=1e-9)


def test_unconstrained_optimum_is_a_minimum(rng):
    m = gen_square_mesh(4)
    hd = build_adini_hd(m)
    pr = example1(lo=-UNBOUNDED, hi=UNBOUNDED).problem
    kkt = KktSystem(pr, hd, m)
    sol = pdas_solve(pr, hd, m, system=kkt)
    J0 = kkt.cost(sol.u)
    for _ in range(10):
        d = rng.standard_normal(len(sol.u))
        assert kkt.cost(sol.u + 1e-3 * d) > J0


def test_large_alpha_drives_control_to_zero():
    m, hd = setup("adini")
    ex = example1()
    norms = []
    for alpha in (1e-3, 1e-1, 1e1, 1e3, 1e6):
        pr = OcpProblem(alpha, -1.0, 1.0, ex.problem.f, ex.problem.y_d, zero)
        sol = pdas_solve(pr, hd, m)
        norms.append(math.sqrt(np.sum(m.area * sol.u ** 2)))
    assert all(a >= b for a, b in zip(norms, norms[1:])), norms
    assert norms[-1] < 1e-6


def test_nonconvergence_reports_history():
    m, hd = setup("adini")
    with pytest.raises(PdasNonConvergence) as exc:
        pdas_solve(example1().problem, hd, m, max_iter=1)
    assert len(exc.value.history) == 2


def test_control_subset_zero_outside():
    m, hd = setup("fvm")
    ex = example1()
    mask = m.mass_center[:, 0] < 0.5
    pr = OcpProblem(ex.problem.alpha, ex.problem.lo, ex.problem.hi, ex.problem.f,
                    ex.problem.y_d, ex.problem.u_d, omega=mask)
    sol = pdas_solve(pr, hd, m)
    assert len(sol.u) == mask.sum()
    assert np.all(sol.control_full(m.n_cells)[~mask] == 0)
    assert np.all(sol.u_post[~mask[hd.quad.cell]] == 0)


# ---------------------------------------------------------------- post-processing

def test_post_process_zero_adjoint():
    m, hd = setup("gr")
    pr = OcpProblem(1.0, -750.0, -50.0, zero, zero, zero)
    u = post_process(pr, m, DiscreteFunction(hd, np.zeros(hd.n_dofs)), hd)
    assert u.shape == (hd.quad.n_points,) and np.all(u == -50.0)


def test_gr_control_error_and_order():
    """Ex1 on GR: err(u) at n=32 about 0.0382, order about 1.08 against n=16."""
    t = run_study(RunConfig("gr", levels=4)).table
    assert abs(t.errors["u"][-1] / 0.038235 - 1.0) < 0.02, t.errors["u"]
    assert abs(t.orders("u")[-1] - 1.0832) < 0.1, t.orders("u")
