"""Reference computations that do not go through the package's numerics.

Values marked frozen were computed once with sympy (exact arithmetic) or
mpmath (30-digit quadrature) and pasted here.
"""

import numpy as np
from scipy.optimize import brentq

# det M~(0.3) of the regular binary fixture, exact cofactor expansion in sympy
DET_MTILDE_REGULAR_AT_03 = 0.10661799709025875591

# Pr(D = 2 | z) of the regular binary fixture, mpmath quadrature of the logit
CELL_SHARES_REGULAR = np.array(
    [
        0.440543531107922564549334573409,
        0.561859607240322742911530467246,
        0.678369406676232306351996279773,
        0.475041555891767347280571448703,
    ]
)

# det A for cell shares (0.2, 0.4, 0.8, 0.6); (0.2, 0.4, 0.6, 0.8) gives exactly 0
DET_A_NONDEGENERATE = -11 / 125

_X, _W = np.polynomial.legendre.leggauss(200)


def logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


def cofactor_det(m):
    """Laplace expansion along the first row."""
    m = np.asarray(m, dtype=float)
    if m.shape == (1, 1):
        return m[0, 0]
    total = 0.0
    for j in range(m.shape[1]):
        minor = np.delete(np.delete(m, 0, axis=0), j, axis=1)
        total += (-1) ** j * m[0, j] * cofactor_det(minor)
    return total


class TwoAltCdf:
    """``F(d, y | z) = int_0^{eta_d(y)} p(d | t, z) dt`` for a J = 2 logit DGP.

    The outcome inverse is found by bisection and the integral by a fixed
    200-node Gauss-Legendre rule.
    """

    def __init__(self, intercept, slope, outcome_fns):
        self.a = np.asarray(intercept, dtype=float)
        self.b = np.asarray(slope, dtype=float)
        self.q = outcome_fns

    def inv(self, fn, y):
        lo, hi = fn(0.0), fn(1.0)
        if y <= lo:
            return 0.0
        if y >= hi:
            return 1.0
        return brentq(lambda t: fn(t) - y, 0.0, 1.0, xtol=1e-15, rtol=1e-15)

    def cdf(self, d, fn, y, z):
        u = self.inv(fn, y)
        t = 0.5 * u * (_X + 1.0)
        p2 = logistic(self.a[z] + self.b[z] * t)
        p = p2 if d == 2 else 1.0 - p2
        return 0.5 * u * np.sum(_W * p)


def pointwise_standard_iv(oracle: TwoAltCdf, eta, bounds):
    """Solve ``F(1, q1 | z) + F(2, q2 | z) = eta`` for z = 1, 2 by nested bisection.

    For fixed ``q1`` the first equation pins ``q2`` (monotone); the second
    equation is then monotone in ``q1`` along that curve.
    """
    (lo1, hi1), (lo2, hi2) = bounds
    f1, f2 = oracle.q

    def q2_given(q1):
        g = lambda q2: oracle.cdf(1, f1, q1, 0) + oracle.cdf(2, f2, q2, 0) - eta
        if g(lo2) >= 0:
            return lo2
        if g(hi2) <= 0:
            return hi2
        return brentq(g, lo2, hi2, xtol=1e-13, rtol=1e-15)

    def h(q1):
        return oracle.cdf(1, f1, q1, 1) + oracle.cdf(2, f2, q2_given(q1), 1) - eta

    if eta <= 0:
        return lo1, lo2
    if eta >= 1:
        return hi1, hi2
    # q1 range on which the first equation has a solution q2 inside its support
    share1 = oracle.cdf(1, f1, hi1, 0)
    share2 = oracle.cdf(2, f2, hi2, 0)

    def q1_at(level):
        if level <= 0:
            return lo1
        if level >= share1:
            return hi1
        return brentq(lambda q: oracle.cdf(1, f1, q, 0) - level, lo1, hi1, xtol=1e-14, rtol=1e-15)

    a, b = q1_at(eta - share2), q1_at(min(eta, share1))
    q1 = brentq(h, a, b, xtol=1e-13, rtol=1e-15)
    return q1, q2_given(q1)
