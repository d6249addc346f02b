"""
Closed-form covariance kernels of the normalized field X^H and its H -> 0 limit.

K_H(t, s) = E[X^H_t X^H_s] splits into four terms

    I1 = -|t-s|^{2H} / 2H
    I2 =  (1/2H) (1/t) int_0^t |s-u|^{2H} du
    I3 =  (1/2H) (1/s) int_0^s |t-u|^{2H} du
    I4 = -(1/2H) (1/ts) int_0^t int_0^s |u-v|^{2H} du dv

Each term diverges like +-1/2H, and the divergent constants cancel in the sum.
Writing p_H(x) = (x^{2H} - 1)/2H, every term is a constant +-1/2H plus a
finite part built from p_H.  Since p_H(x) -> log x as H -> 0, the finite parts
evaluated with p_0 = log are exactly the terms of the limit kernel

    K(t, s) = log 1/|t-s| + g(t, s),

so one code path serves both K_H and K.  Inputs are reduced by the exact
symmetries K(t,s) = K(s,t) = K(-t,-s) to either 0 < s < t (same sign) or
s = -u < 0 < t with u <= t (opposite signs).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np

from .errors import DomainError, SingularInputError

__all__ = [
    "KernelDecomposition",
    "DominatingBound",
    "ConeKernelSpec",
    "stable_pow_ratio",
    "kernel_kh",
    "kernel_kh_diag",
    "kernel_limit",
    "kh_total",
    "i24_excess",
    "dominating_bound",
    "dominating_bound_values",
    "corrected_bound_values",
    "kernel_kh_upper",
    "upper_bound_constant",
    "cone_kernel",
    "DEFAULT_PROBES",
    "kernel_table_rows",
    "strictly_decreasing",
]


@dataclass(frozen=True)
class KernelDecomposition:
    """The four I-terms of K_H(t, s) (h = 0 means the limit kernel) and their sum."""

    t: float
    s: float
    h: float
    i1: float
    i2: float
    i3: float
    i4: float
    total: float


@dataclass(frozen=True)
class DominatingBound:
    t: float
    s: float
    h: float
    kind: Literal["L1", "L2"]
    value: float


@dataclass(frozen=True)
class ConeKernelSpec:
    """Truncation level of the cone approximation of log_+ 1/|x|."""

    epsilon: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")


def _pow_ratio(x, h: float):
    # (x^{2h} - 1)/2h without cancellation; log x at h = 0
    lx = np.log(x)
    if h == 0.0:
        return lx
    return np.expm1(2.0 * h * lx) / (2.0 * h)


def stable_pow_ratio(x, h: float):
    """(x^{2h} - 1) / (2h), evaluated as expm1(2h log x) / 2h.

    Accepts scalars or arrays.  ``h = 0`` returns the limit ``log x``.
    """
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0.0)):
        raise DomainError("stable_pow_ratio requires x > 0")
    if not 0.0 <= h < 1.0:
        raise DomainError(f"h must lie in [0, 1), got {h}")
    out = _pow_ratio(xa, h)
    return float(out) if np.ndim(out) == 0 else out


def _check_h(h: float, upper: float = 1.0) -> float:
    h = float(h)
    if not 0.0 < h < upper:
        raise DomainError(f"Hurst parameter must lie in (0, {upper}), got {h}")
    return h


def _finite_parts(t, s, h: float):
    """Finite parts F1..F4 of the I-terms in canonical orientation.

    Returns (F1, F2, F3, F4, swap) where ``swap`` marks entries whose canonical
    orientation exchanged the roles of t and s (i.e. of I2 and I3).  Entries with
    t == s, t == 0 or s == 0 are garbage and must be masked by the caller.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    t, s = np.broadcast_arrays(t, s)
    at, as_ = np.abs(t), np.abs(s)
    swap = at < as_
    big = np.maximum(at, as_)
    small = np.minimum(at, as_)
    mixed = (t * s) < 0.0

    # placeholders keep the log finite on masked entries
    bad = (small == 0.0) | ((~mixed) & (big == small))
    big = np.where(bad, 2.0, big)
    small = np.where(bad, 1.0, small)

    a = 1.0 / (2.0 * h + 1.0)
    b = 1.0 / (2.0 * h + 2.0)
    pb = _pow_ratio(big, h)
    ps = _pow_ratio(small, h)

    # same sign: t = big, s = small, d = t - s
    d = big - small
    d = np.where(mixed, 1.0, d)
    pd = _pow_ratio(d, h)
    f1_same = -pd
    f2_same = -a + a * (small * ps + d * pd) / big
    f3_same = -a + a * (big * pb - d * pd) / small
    f4_same = 2.0 * a - b - a * b * (big * big * pb + small * small * ps - d * d * pd) / (big * small)

    # opposite sign: t = big, s = -u with u = small, w = t + u
    w = big + small
    pw = _pow_ratio(w, h)
    f1_mix = -pw
    f2_mix = -a + a * (w * pw - small * ps) / big
    f3_mix = -a + a * (w * pw - big * pb) / small
    f4_mix = 2.0 * a - b - a * b * (w * w * pw - big * big * pb - small * small * ps) / (big * small)

    f1 = np.where(mixed, f1_mix, f1_same)
    f2 = np.where(mixed, f2_mix, f2_same)
    f3 = np.where(mixed, f3_mix, f3_same)
    f4 = np.where(mixed, f4_mix, f4_same)
    return f1, f2, f3, f4, swap


def _total(f1, f2, f3, f4):
    # f2 + f3 commutes exactly, so the sum is invariant under the swap
    return (f1 + (f2 + f3)) + f4


def _singular_check(t: float, s: float) -> None:
    if t == 0.0 or s == 0.0:
        raise SingularInputError(f"kernel undefined at t={t}, s={s} (zero argument)")
    if t == s:
        raise SingularInputError(f"kernel undefined on the diagonal t = s = {t}")


def _decompose(t: float, s: float, h: float) -> KernelDecomposition:
    _singular_check(t, s)
    f1, f2, f3, f4, swap = _finite_parts(t, s, h)
    f1, f2, f3, f4 = float(f1), float(f2), float(f3), float(f4)
    total = float(_total(f1, f2, f3, f4))
    if h > 0.0:
        c = 1.0 / (2.0 * h)
        i1, i2, i3, i4 = f1 - c, f2 + c, f3 + c, f4 - c
    else:
        i1, i2, i3, i4 = f1, f2, f3, f4
    if bool(swap):
        i2, i3 = i3, i2
    return KernelDecomposition(float(t), float(s), float(h), i1, i2, i3, i4, total)


def kernel_kh(t: float, s: float, h: float) -> KernelDecomposition:
    """Decomposition of K_H(t, s) for t, s nonzero and distinct.

    The reported ``total`` is the sum of the finite parts, which equals
    i1 + i2 + i3 + i4 up to the rounding of the cancelling 1/2H constants.
    """
    return _decompose(t, s, _check_h(h))


def kernel_limit(t: float, s: float) -> KernelDecomposition:
    """Decomposition of the H -> 0 limit kernel K(t, s) = log 1/|t-s| + g(t, s)."""
    return _decompose(t, s, 0.0)


def kernel_kh_diag(t: float, h: float) -> float:
    """Variance of X^H_t: |t|^{2H} / (H (2H + 2)); zero at t = 0."""
    h = _check_h(h)
    if t == 0.0:
        return 0.0
    return abs(t) ** (2.0 * h) / (h * (2.0 * h + 2.0))


def kh_total(t, s, h: float):
    """Vectorized K_H(t, s) on arbitrary real arrays.

    ``h = 0`` gives the limit kernel.  Points with t = 0 or s = 0 return 0 (X_0 = 0
    and the limit kernel extends continuously by 0 there).  On the diagonal the
    variance |t|^{2H}/(H(2H+2)) is returned for h > 0 and +inf for h = 0.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        f1, f2, f3, f4, _ = _finite_parts(t, s, h)
        out = _total(f1, f2, f3, f4)
        diag = t == s
        if np.any(diag):
            if h > 0.0:
                var = np.abs(t) ** (2.0 * h) / (h * (2.0 * h + 2.0))
            else:
                var = np.full(np.shape(out), np.inf)
            out = np.where(diag, var, out)
        out = np.where((t == 0.0) | (s == 0.0), 0.0, out)
    return out


def i24_excess(t, s, h: float):
    """I2 + I3 + I4 - 1/(H(2H+2)), vectorized, for nonzero distinct t, s.

    This is the quantity the dominating bounds L1, L2 control.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    t, s = np.broadcast_arrays(t, s)
    big = np.maximum(np.abs(t), np.abs(s))
    small = np.minimum(np.abs(t), np.abs(s))
    mixed = (t * s) < 0.0
    b = 1.0 / (2.0 * h + 2.0)
    pb = _pow_ratio(big, h)
    ps = _pow_ratio(small, h)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(mixed, 1.0, big - small)
        w = big + small
        same = big * big * pb + small * small * ps - d * d * _pow_ratio(d, h)
        mix = w * w * _pow_ratio(w, h) - big * big * pb - small * small * ps
    return b * np.where(mixed, mix, same) / (big * small)


def dominating_bound_values(t, s, h: float):
    """Vectorized L1/L2 majorant of |I2 + I3 + I4 - 1/(H(2H+2))|.

    Same-sign pairs use L1(a, b) = |p(b)| + |p(a)| + (a-b)^{2H} with a = max |.|,
    b = min |.|; opposite-sign pairs use L2(a, b) = |p(b)| + 2|p(a)| + (a+b)^{2H},
    where p(x) = (x^{2H} - 1)/2H.  Returns (values, is_l2).
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    t, s = np.broadcast_arrays(t, s)
    big = np.maximum(np.abs(t), np.abs(s))
    small = np.minimum(np.abs(t), np.abs(s))
    mixed = (t * s) < 0.0
    pb = np.abs(_pow_ratio(big, h))
    ps = np.abs(_pow_ratio(small, h))
    l1 = ps + pb + (big - small) ** (2.0 * h)
    l2 = ps + 2.0 * pb + (big + small) ** (2.0 * h)
    return np.where(mixed, l2, l1), mixed


def corrected_bound_values(t, s, h: float):
    """Majorant of |I2 + I3 + I4 - 1/(H(2H+2))| that also holds for mixed signs.

    Same-sign pairs use L1.  For opposite signs, with a = max |.|, b = min |.|,
    u = b/a and concavity of p(x) = (x^{2H} - 1)/2H (so 0 < h <= 1/2):

        (a+b)^2 (p(a+b) - p(a)) / (ab) <= (1 + u)^2 a^{2H}
        ((a+b)^2 - a^2) |p(a)| / (ab)   =  (2 + u) |p(a)|
        b^2 |p(b)| / (ab)               =  u |p(b)|

    and the exact excess carries the factor 1/(2H + 2).
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    t, s = np.broadcast_arrays(t, s)
    l1, mixed = dominating_bound_values(t, s, h)
    big = np.maximum(np.abs(t), np.abs(s))
    small = np.minimum(np.abs(t), np.abs(s))
    u = small / big
    mix = ((1.0 + u) ** 2 * big ** (2.0 * h) + (2.0 + u) * np.abs(_pow_ratio(big, h))
           + u * np.abs(_pow_ratio(small, h))) / (2.0 * h + 2.0)
    return np.where(mixed, mix, l1)


def dominating_bound(t: float, s: float, h: float) -> DominatingBound:
    """H-uniform majorant used for dominated convergence, valid for 0 < h <= 1/2."""
    _singular_check(t, s)
    h = float(h)
    if not 0.0 < h <= 0.5:
        raise DomainError(f"dominating bounds need 0 < h <= 1/2, got {h}")
    value, mixed = dominating_bound_values(t, s, h)
    return DominatingBound(float(t), float(s), h, "L2" if bool(mixed) else "L1", float(value))


# h values over which the upper-bound constant C(delta) is calibrated
UPPER_BOUND_H_SWEEP = (0.45, 0.3, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001, 1e-4)


def _log_floor(diff, h: float):
    # log 1/(|t-s| v e^{-1/2H})
    diff = np.asarray(diff, dtype=float)
    cap = 1.0 / (2.0 * h)
    with np.errstate(divide="ignore"):
        return np.where(diff > 0.0, np.minimum(-np.log(diff), cap), cap)


@lru_cache(maxsize=None)
def upper_bound_constant(delta: float, n_grid: int = 200) -> float:
    """Empirical C(delta) with K_H <= log 1/(|t-s| v e^{-1/2H}) + C(delta) on [delta, 1]^2.

    Maximum of the excess over an n_grid x n_grid grid and the h sweep, plus a
    10% margin.  Cached per delta.
    """
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    x = np.linspace(delta, 1.0, n_grid)
    tt, ss = np.meshgrid(x, x, indexing="ij")
    worst = -np.inf
    for h in UPPER_BOUND_H_SWEEP:
        excess = kh_total(tt, ss, h) - _log_floor(np.abs(tt - ss), h)
        worst = max(worst, float(np.max(excess)))
    return worst + 0.1 * abs(worst)


def kernel_kh_upper(t: float, s: float, h: float, delta: float) -> float:
    """Upper bound log 1/(|t-s| v e^{-1/2H}) + C(delta) for t, s in [delta, 1]."""
    h = _check_h(h, 0.5)
    if not (delta <= t <= 1.0 and delta <= s <= 1.0):
        raise DomainError(f"(t, s) = ({t}, {s}) outside [{delta}, 1]^2")
    return float(_log_floor(abs(t - s), h)) + upper_bound_constant(float(delta))


def cone_kernel(x, spec: ConeKernelSpec):
    """Cone approximation -log(|x| v eps) - |x|/(|x| v eps) + 1 for 0 < |x| <= 1."""
    xa = np.abs(np.asarray(x, dtype=float))
    if np.any(xa == 0.0) or np.any(xa > 1.0):
        raise DomainError("cone_kernel closed form needs 0 < |x| <= 1")
    m = np.maximum(xa, spec.epsilon)
    out = -np.log(m) - xa / m + 1.0
    return float(out) if np.ndim(out) == 0 else out


# probe points covering same-sign positive, same-sign negative and mixed signs
DEFAULT_PROBES = (
    (2.0, 1.0),
    (0.7, 0.3),
    (1.5, 0.4),
    (-0.7, -0.3),
    (-2.0, -1.0),
    (-0.5, -1.5),
    (1.0, -1.0),
    (0.6, -0.2),
    (-0.4, 0.9),
)


def kernel_table_rows(probes, h_values) -> list[dict]:
    """Rows (t, s, h, i1..i4, total, limit_total, abs_gap); one limit row (h = 0) per probe."""
    rows = []
    for t, s in probes:
        lim = kernel_limit(t, s)
        for h in h_values:
            k = kernel_kh(t, s, h)
            rows.append(
                dict(t=t, s=s, h=h, i1=k.i1, i2=k.i2, i3=k.i3, i4=k.i4, total=k.total,
                     limit_total=lim.total, abs_gap=abs(k.total - lim.total))
            )
        rows.append(
            dict(t=t, s=s, h=0.0, i1=lim.i1, i2=lim.i2, i3=lim.i3, i4=lim.i4, total=lim.total,
                 limit_total=lim.total, abs_gap=0.0)
        )
    return rows


def strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))
