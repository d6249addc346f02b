"""
Vectorized adaptive Gauss-Kronrod (7/15) quadrature.

Many independent 1-D integrals are refined together so that every integrand
evaluation is one numpy call over all active nodes.  The refinement rule is
global per integral: while the summed error estimate of an integral exceeds its
tolerance, every one of its intervals whose error exceeds tol / n_intervals is
bisected.  That keeps endpoint log singularities cheap (only the interval
touching the singularity keeps splitting) where a length-proportional local rule
would refine forever.

The 2-D driver integrates F(t, s) over a rectangle in the rotated coordinates
d = t - s, sigma = (t + s)/2 (unit Jacobian).  The diagonal t = s becomes the
edge d = 0 of the two triangles d < 0 and d > 0, so the log singularity of the
covariance kernels sits on an interval endpoint of the outer integral.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import QuadratureError

# Kronrod nodes (nonnegative half) and weights, 15-point rule; Gauss 7-point
# nodes are the odd-indexed Kronrod nodes.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])            # ascending, 15 nodes
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[1:7:2] = _WG[:3]
GAUSS_WEIGHTS[7] = _WG[3]
GAUSS_WEIGHTS[9:14:2] = _WG[:3][::-1]


def _rule(f, a, b, owner):
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * NODES[None, :]
    y = f(x, owner)
    k = half * (y @ KRONROD_WEIGHTS)
    g = half * (y @ GAUSS_WEIGHTS)
    return k, np.abs(k - g)


def integrate_many(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    owner: np.ndarray | None = None,
    n_integrals: int | None = None,
    abs_tol: float = 1e-10,
    max_subdivisions: int = 2000,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate several functions over unions of intervals.

    Parameters
    ----------
    f : callable
        ``f(x, owner)`` with ``x`` of shape (m, 15) and ``owner`` of shape (m,),
        the index of the integral each row of nodes belongs to.  Must return an
        array shaped like ``x``.
    lo, hi : array_like
        Initial segments.  Segment ``j`` contributes to integral ``owner[j]``.
    owner : array_like, optional
        Defaults to one integral per segment.
    abs_tol : float
        Absolute tolerance applied to each integral separately.
    max_subdivisions : int
        Maximum number of intervals any single integral may use.

    Returns
    -------
    values, errors : ndarray
        Per-integral estimates and summed Kronrod-Gauss error estimates.

    Raises
    ------
    QuadratureError
        If some integral needs more than ``max_subdivisions`` intervals, or the
        integrand returns non-finite values.
    """
    a = np.asarray(lo, dtype=float).ravel()
    b = np.asarray(hi, dtype=float).ravel()
    own = np.arange(a.size) if owner is None else np.asarray(owner, dtype=np.intp).ravel()
    n = int(own.max()) + 1 if n_integrals is None else n_integrals
    if a.size == 0:
        return np.zeros(n), np.zeros(n)

    est, err = _rule(f, a, b, own)
    while True:
        if not (np.all(np.isfinite(est)) and np.all(np.isfinite(err))):
            bad = int(own[np.flatnonzero(~(np.isfinite(est) & np.isfinite(err)))[0]])
            raise QuadratureError(f"non-finite integrand values in integral {bad}", math.nan,
                                  math.inf)
        tot_err = np.bincount(own, weights=err, minlength=n)
        count = np.bincount(own, minlength=n)
        open_ = tot_err > abs_tol
        if not open_.any():
            break
        if count[open_].max() >= max_subdivisions:
            worst = int(np.argmax(np.where(open_, count, -1)))
            best = float(np.bincount(own, weights=est, minlength=n)[worst])
            raise QuadratureError(
                f"no convergence within {max_subdivisions} subdivisions", best, float(tot_err[worst])
            )
        share = abs_tol / np.maximum(count, 1)
        width = b - a
        # intervals below resolution cannot be refined further
        resolvable = width > 64.0 * np.finfo(float).eps * np.maximum(np.abs(a), np.abs(b))
        split = open_[own] & (err > share[own]) & resolvable
        if not split.any():
            break
        keep = ~split
        m = 0.5 * (a[split] + b[split])
        na = np.concatenate([a[split], m])
        nb = np.concatenate([m, b[split]])
        nown = np.concatenate([own[split], own[split]])
        nest, nerr = _rule(f, na, nb, nown)
        a = np.concatenate([a[keep], na])
        b = np.concatenate([b[keep], nb])
        own = np.concatenate([own[keep], nown])
        est = np.concatenate([est[keep], nest])
        err = np.concatenate([err[keep], nerr])

    values = np.bincount(own, weights=est, minlength=n)
    errors = np.bincount(own, weights=err, minlength=n)
    return values, errors


def integrate(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
              points: Sequence[float] = (), abs_tol: float = 1e-10,
              max_subdivisions: int = 2000) -> tuple[float, float]:
    """Adaptive integral of a vectorized scalar function over [a, b], split at ``points``."""
    cuts = sorted({a, b, *[p for p in points if a < p < b]})
    lo, hi = np.array(cuts[:-1]), np.array(cuts[1:])
    v, e = integrate_many(lambda x, _o: f(x), lo, hi, np.zeros(lo.size, dtype=np.intp), 1,
                          abs_tol=abs_tol, max_subdivisions=max_subdivisions)
    return float(v[0]), float(e[0])


def integrate_rectangle_diagonal(
    F: Callable[[np.ndarray, np.ndarray], np.ndarray],
    t_box: tuple[float, float],
    s_box: tuple[float, float],
    abs_tol: float = 1e-9,
    max_subdivisions: int = 2000,
    kinks: Sequence[float] = (0.0,),
) -> tuple[float, float]:
    """Integrate F(t, s) over t_box x s_box with a log singularity allowed on t = s.

    ``kinks`` lists coordinates c where F may be non-smooth along the lines t = c
    and s = c; inner integrals are split there.
    """
    a1, b1 = t_box
    a2, b2 = s_box
    d_lo, d_hi = a1 - b2, b1 - a2
    outer_cuts = sorted({d_lo, d_hi, *[c for c in (0.0,) if d_lo < c < d_hi]})
    inner_tol = 0.1 * abs_tol / max(d_hi - d_lo, 1e-300)
    kinks = tuple(kinks)

    def inner(d: np.ndarray) -> np.ndarray:
        # sigma range where t = sigma + d/2 and s = sigma - d/2 stay in the boxes
        d = d.ravel()
        lo = np.maximum(a1 - 0.5 * d, a2 + 0.5 * d)
        hi = np.maximum(np.minimum(b1 - 0.5 * d, b2 + 0.5 * d), lo)
        cuts = [lo, hi]
        for c in kinks:
            cuts.append(np.clip(c - 0.5 * d, lo, hi))   # t = c
            cuts.append(np.clip(c + 0.5 * d, lo, hi))   # s = c
        grid = np.sort(np.stack(cuts, axis=1), axis=1)
        seg_lo = grid[:, :-1].ravel()
        seg_hi = grid[:, 1:].ravel()
        seg_own = np.repeat(np.arange(d.size), grid.shape[1] - 1)
        live = seg_hi > seg_lo
        if not live.any():
            return np.zeros(d.size)

        def g(x, o):
            dd = d[o][:, None]
            return F(x + 0.5 * dd, x - 0.5 * dd)

        vals, _ = integrate_many(g, seg_lo[live], seg_hi[live], seg_own[live], d.size,
                                 abs_tol=inner_tol, max_subdivisions=max_subdivisions)
        return vals

    def outer(x, _o):
        return inner(x).reshape(x.shape)

    lo, hi = np.array(outer_cuts[:-1]), np.array(outer_cuts[1:])
    v, e = integrate_many(outer, lo, hi, np.zeros(lo.size, dtype=np.intp), 1,
                          abs_tol=0.9 * abs_tol, max_subdivisions=max_subdivisions)
    return float(v[0]), float(e[0])
