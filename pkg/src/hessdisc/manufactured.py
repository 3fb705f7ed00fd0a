"""Exact solutions and derived data for the two benchmark control problems.

Data are manufactured from prescribed state/adjoint pairs: ``f = bilap(y) - u``
and ``y_d = y - bilap(p)``; all derivatives come from :mod:`hessdisc.jets`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from . import jets
from .control import OcpProblem
from .quadrature import ClampedField

L_SHAPE_ANGLE = 1.5 * math.pi


class ExactSolution:
    """Smooth field given by a closed-form expression in jet arithmetic.

    ``expr(X, Y)`` receives :class:`~hessdisc.jets.Jet` coordinates.  If a
    ``singular_point`` is given, the value and gradient there are returned as
    their limit 0 and higher derivatives as NaN.
    """

    chunk = 65536

    def __init__(self, expr, singular_point=None, name=""):
        self.expr = expr
        self.singular_point = None if singular_point is None else np.asarray(singular_point, float)
        self.name = name
        self._last = None  # (points, coefficients, bad): repeated queries are common

    def jet(self, P):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        last = self._last
        if last is not None and last[0].shape == P.shape and np.array_equal(last[0], P):
            return last[1], last[2]
        c, bad = self._jet(P)
        self._last = (P.copy(), c, bad)
        return c, bad

    def _jet(self, P):
        if self.singular_point is None:
            bad = np.zeros(len(P), dtype=bool)
        else:
            bad = np.all(P == self.singular_point, axis=1)
        c = np.full((jets.NCOEF, len(P)), np.nan)
        good = np.flatnonzero(~bad)
        for s in range(0, len(good), self.chunk):
            idx = good[s:s + self.chunk]
            c[:, idx] = jets.derivatives(self.expr, P[idx]).c
        c[:3, bad] = 0.0
        return c, bad

    def _d(self, c, i, j):
        return math.factorial(i) * math.factorial(j) * c[jets.POS[(i, j)]]

    def value(self, P):
        """Plain floating-point evaluation (no derivatives)."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        with np.errstate(invalid="ignore", divide="ignore"):
            v = np.asarray(self.expr(P[:, 0], P[:, 1]), dtype=float)
        if self.singular_point is not None:
            v = np.where(np.all(P == self.singular_point, axis=1), 0.0, v)
        return np.broadcast_to(v, (len(P),)).copy()

    __call__ = value

    def gradient(self, P):
        c, _ = self.jet(P)
        return np.column_stack([self._d(c, 1, 0), self._d(c, 0, 1)])

    def hessian(self, P):
        c, _ = self.jet(P)
        xx, xy, yy = self._d(c, 2, 0), self._d(c, 1, 1), self._d(c, 0, 2)
        return np.stack([np.column_stack([xx, xy]), np.column_stack([xy, yy])], axis=1)

    def laplacian(self, P):
        c, _ = self.jet(P)
        return self._d(c, 2, 0) + self._d(c, 0, 2)

    def bilaplacian(self, P):
        c, _ = self.jet(P)
        return self._d(c, 4, 0) + 2 * self._d(c, 2, 2) + self._d(c, 0, 4)


@dataclass
class Manufactured:
    """A control problem together with its exact KKT triple."""

    name: str
    domain: str
    problem: OcpProblem
    state: ExactSolution
    adjoint: ExactSolution
    control: ClampedField


def _build(name, domain, state, adjoint, alpha, lo, hi):
    u_d = lambda P: np.zeros(len(P))  # noqa: E731
    control = ClampedField(lambda P: u_d(P) - adjoint.value(P) / alpha, lo, hi)
    f = lambda P: state.bilaplacian(P) - control(P)  # noqa: E731
    y_d = lambda P: state.value(P) - adjoint.bilaplacian(P)  # noqa: E731
    problem = OcpProblem(alpha=alpha, lo=lo, hi=hi, f=f, y_d=y_d, u_d=u_d)
    return Manufactured(name, domain, problem, state, adjoint, control)


def _sin2sin2(X, Y):
    return (jets.sin(math.pi * X) ** 2) * (jets.sin(math.pi * Y) ** 2)


def example1(alpha=1e-3, lo=-750.0, hi=-50.0):
    """Unit square, ``y = p = sin^2(pi x) sin^2(pi y)``, ``u_d = 0``."""
    ybar = ExactSolution(_sin2sin2, name="sin2sin2")
    return _build("ex1", "unit-square", ybar, ybar, alpha, lo, hi)


def angular_factor(gamma, omega=L_SHAPE_ANGLE):
    """The corner function ``g(theta)`` for exponent ``gamma`` and opening ``omega``."""
    gm, gp = gamma - 1.0, gamma + 1.0
    A = math.sin(gm * omega) / gm - math.sin(gp * omega) / gp
    C = math.cos(gm * omega) - math.cos(gp * omega)

    def g(t):
        return (A * (jets.cos(gm * t) - jets.cos(gp * t))
                - (jets.sin(gm * t) * (1 / gm) - jets.sin(gp * t) * (1 / gp)) * C)

    return g


def singular_expr(gamma, omega=L_SHAPE_ANGLE):
    g = angular_factor(gamma, omega)

    def expr(X, Y):
        r = jets.sqrt(X * X + Y * Y)
        theta = jets.angle(X, Y)
        return ((X * X - 1) ** 2) * ((Y * Y - 1) ** 2) * jets.power(r, 1 + gamma) * g(theta)

    return expr


def example2(alpha=1e-3, lo=-600.0, hi=-50.0, gamma=None):
    """L-shaped domain with the corner-singular state ``r^(1+gamma) g(theta)``."""
    if gamma is None:
        gamma = solve_gamma()
    ybar = ExactSolution(singular_expr(gamma), singular_point=(0.0, 0.0), name="l-corner")
    return _build("ex2", "l-shape", ybar, ybar, alpha, lo, hi)


def characteristic_residual(gamma, omega=L_SHAPE_ANGLE):
    return math.sin(gamma * omega) ** 2 - gamma ** 2 * math.sin(omega) ** 2


def solve_gamma(omega=L_SHAPE_ANGLE, bracket=(0.5, 0.6), xtol=1e-15):
    """Non-characteristic root of ``sin^2(g w) = g^2 sin^2(w)`` inside ``bracket``."""
    a, b = bracket
    fa, fb = characteristic_residual(a, omega), characteristic_residual(b, omega)
    if fa * fb >= 0:
        raise ValueError(f"no sign change of the corner equation on [{a}, {b}]")
    return bisect(characteristic_residual, a, b, args=(omega,), xtol=xtol, rtol=4 * np.finfo(float).eps)


PROBLEMS = {"ex1": example1, "ex2": example2}
