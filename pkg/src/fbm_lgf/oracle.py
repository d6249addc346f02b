"""
Independent quadrature oracles for the closed forms in ``kernels``.

Nothing here uses the I-term closed forms; every value is a direct numerical
integral of a defining expression, computed with scipy's QUADPACK wrappers.
"""

from __future__ import annotations

import math

from scipy.integrate import dblquad, quad

__all__ = ["kh_oracle", "limit_oracle", "g_oracle", "cone_oracle"]

_OPTS = dict(epsabs=1e-13, epsrel=1e-12, limit=200)


def _fbm_cov(u, v, h):
    return 0.5 * (abs(u) ** (2 * h) + abs(v) ** (2 * h) - abs(u - v) ** (2 * h))


def _kink(c):
    return [c] if 0.0 < c < 1.0 else None


def kh_oracle(t: float, s: float, h: float) -> float:
    """E[X_t X_s] from the fBm covariance by averaging over [0, t] and [0, s].

    With A_t f = int_0^1 f(t a) da, K_H = (R - A_s R - A_t R + A_t A_s R) / H.
    """
    r = _fbm_cov(t, s, h)
    # kinks of |t - s b| and |t a - s| sit at b = t/s and a = s/t
    avg_s = quad(lambda b: _fbm_cov(t, s * b, h), 0.0, 1.0, points=_kink(t / s), **_OPTS)[0]
    avg_t = quad(lambda a: _fbm_cov(t * a, s, h), 0.0, 1.0, points=_kink(s / t), **_OPTS)[0]

    def inner(a):
        return quad(lambda b: _fbm_cov(t * a, s * b, h), 0.0, 1.0,
                    points=_kink(t * a / s), **_OPTS)[0]

    both = quad(inner, 0.0, 1.0, **_OPTS)[0]
    return (r - avg_s - avg_t + both) / h


def g_oracle(t: float, s: float) -> float:
    """avg_u log|s - u| + avg_v log|t - v| - avg_{u,v} log|u - v| over [0, t] x [0, s]."""
    one = quad(lambda a: math.log(abs(s - t * a)), 0.0, 1.0, points=_kink(s / t), **_OPTS)[0]
    two = quad(lambda b: math.log(abs(t - s * b)), 0.0, 1.0, points=_kink(t / s), **_OPTS)[0]

    def inner(a):
        # int_0^1 log|t a - s b| db, split at the singular point b = t a / s
        return quad(lambda b: math.log(abs(t * a - s * b)), 0.0, 1.0,
                    points=_kink(t * a / s), **_OPTS)[0]

    both = quad(inner, 0.0, 1.0, **_OPTS)[0]
    return one + two - both


def limit_oracle(t: float, s: float) -> float:
    """log 1/|t - s| + g(t, s)."""
    return -math.log(abs(t - s)) + g_oracle(t, s)


def cone_oracle(x: float, eps: float) -> float:
    """Area of C(0) n C(x) n {t > eps} under dy dt / t^2, by 2-D quadrature.

    C(z) = {(y, t): |z - y| <= (t ^ 1)/2}.  The t-range is cut at |x| (where the
    cones start to meet) and at 1 (where their width saturates).
    """
    x = abs(float(x))

    def y_lo(t):
        return x - 0.5 * min(t, 1.0)

    def y_hi(t):
        return 0.5 * min(t, 1.0)

    def f(y, t):
        return 1.0 / (t * t)

    cuts = sorted({eps, max(x, eps), max(1.0, eps)}) + [math.inf]
    total = 0.0
    for a, b in zip(cuts, cuts[1:]):
        lo = max(a, x)
        if b > lo:
            total += dblquad(f, lo, b, y_lo, y_hi, epsabs=1e-13, epsrel=1e-12)[0]
    return total
