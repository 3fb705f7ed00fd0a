"""Truncated bivariate Taylor arithmetic (forward-mode derivatives to order 4).

A :class:`Jet` holds the Taylor coefficients ``c[i, j]`` (``i + j <= ORDER``)
of a function of ``(x, y)`` about a batch of base points.  Composing closed
form expressions from jets yields every partial derivative up to total order
four, e.g. ``d^4 f / dx^2 dy^2 = 2! 2! c[2, 2]``.
"""
from __future__ import annotations

import math

import numpy as np

ORDER = 4
INDEX = [(i, t - i) for t in range(ORDER + 1) for i in range(t, -1, -1)]
POS = {ij: k for k, ij in enumerate(INDEX)}
NCOEF = len(INDEX)

_PAIRS = [(POS[a], POS[b], POS[(a[0] + b[0], a[1] + b[1])])
          for a in INDEX for b in INDEX if sum(a) + sum(b) <= ORDER]


class Jet:
    __slots__ = ("c",)
    __array_priority__ = 100

    def __init__(self, c):
        self.c = c

    @classmethod
    def variable(cls, values, axis):
        v = np.asarray(values, dtype=float)
        c = np.zeros((NCOEF,) + v.shape)
        c[0] = v
        c[POS[(1, 0) if axis == 0 else (0, 1)]] = 1.0
        return cls(c)

    @classmethod
    def constant(cls, value, shape):
        c = np.zeros((NCOEF,) + shape)
        c[0] = value
        return cls(c)

    @property
    def value(self):
        return self.c[0]

    def coef(self, i, j):
        return self.c[POS[(i, j)]]

    def deriv(self, i, j):
        """Partial derivative d^{i+j}/dx^i dy^j at the base points."""
        return math.factorial(i) * math.factorial(j) * self.c[POS[(i, j)]]

    # -- arithmetic -------------------------------------------------------
    def _lift(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.c.shape[1:])

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.c + other.c)
        c = self.c.copy()
        c[0] = c[0] + other
        return Jet(c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c * other)
        a, b = self.c, other.c
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
        for p, q, r in _PAIRS:
            out[r] += a[p] * b[q]
        return Jet(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c / other)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, s):
        if isinstance(s, int) and s >= 0:
            out = Jet.constant(1.0, self.c.shape[1:])
            for _ in range(s):
                out = out * self
            return out
        return self.power(s)

    # -- composition with univariate functions ----------------------------
    def compose(self, derivs):
        """``f(self)`` given ``derivs[k] = f^(k)(self.value)`` for k <= ORDER."""
        du = Jet(self.c.copy())
        du.c[0] = 0.0
        out = Jet.constant(0.0, self.c.shape[1:])
        out.c[0] = derivs[0]
        term = None
        for k in range(1, ORDER + 1):
            term = du if term is None else term * du
            out = out + term * (derivs[k] / math.factorial(k))
        return out

    def reciprocal(self):
        u = self.value
        return self.compose([(-1) ** k * math.factorial(k) / u ** (k + 1)
                             for k in range(ORDER + 1)])

    def power(self, s):
        u = self.value
        d, coef = [], 1.0
        for k in range(ORDER + 1):
            d.append(coef * u ** (s - k))
            coef *= s - k
        return self.compose(d)

    def sqrt(self):
        return self.power(0.5)

    def exp(self):
        e = np.exp(self.value)
        return self.compose([e] * (ORDER + 1))

    def log(self):
        u = self.value
        return self.compose([np.log(u)] + [(-1) ** (k - 1) * math.factorial(k - 1) / u ** k
                                           for k in range(1, ORDER + 1)])

    def sin(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self.compose([s, c, -s, -c, s])

    def cos(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self.compose([c, -s, -c, s, c])


def sin(u):
    return u.sin() if isinstance(u, Jet) else np.sin(u)


def cos(u):
    return u.cos() if isinstance(u, Jet) else np.cos(u)


def sqrt(u):
    return u.sqrt() if isinstance(u, Jet) else np.sqrt(u)


def power(u, s):
    return u.power(s) if isinstance(u, Jet) else np.power(u, s)


def _atan_small(t):
    # atan(t) = t - t^3/3 + O(t^5); exact to order 4 when t has zero constant term
    return t - t * t * t * (1.0 / 3.0)


def angle(x, y, branch_cut=0.0):
    """Polar angle of ``(x, y)`` as a jet, values in ``[branch_cut, branch_cut + 2 pi)``."""
    if not isinstance(x, Jet):
        return np.mod(np.arctan2(y, x) - branch_cut, 2 * np.pi) + branch_cut
    th0 = np.mod(np.arctan2(y.value, x.value) - branch_cut, 2 * np.pi) + branch_cut
    ct, st = np.cos(th0), np.sin(th0)
    # rotate so the base point sits on the positive axis: theta = th0 + atan(Y/X)
    X = x * ct + y * st
    Y = y * ct - x * st
    Y.c[0] = 0.0
    return _atan_small(Y / X) + th0


def derivatives(fn, P):
    """Evaluate ``fn(X, Y)`` on jets at points ``P`` (n, 2)."""
    P = np.asarray(P, dtype=float)
    X = Jet.variable(P[:, 0], 0)
    Y = Jet.variable(P[:, 1], 1)
    return fn(X, Y)
