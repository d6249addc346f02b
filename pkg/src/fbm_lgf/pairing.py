"""
Second-moment checks of X^H -> X against Schwartz test functions.

Two routes to E[<X, f1><X, f2>]:

* quadrature of the closed-form kernel, double_integral_kernel, and
* Monte Carlo over sampled paths, pairing each path with f by the trapezoidal rule.

Test functions are scaled and shifted orthonormal Hermite functions.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np

from .errors import DomainError, QuadratureError, SupportError
from .kernels import kh_total
from .quadrature import integrate, integrate_rectangle_diagonal
from .sampler import TimeGrid, normalize_to_x, sample_fbm

SUPPORT_RTOL = 1e-12
BOX_PAD = 2.0
MC_BLOCK = 2048

__all__ = [
    "TestFunction",
    "QuadratureSpec",
    "PairingEstimate",
    "Kernel",
    "hermite_function",
    "eval_test_function",
    "pair_path",
    "pair_ensemble",
    "pairing_grid",
    "double_integral_kernel",
    "convergence_report",
    "ConvergenceReport",
    "mc_pairing_covariance",
]


def hermite_function(n: int, x) -> np.ndarray:
    """Orthonormal Hermite function psi_n(x) = H_n(x) e^{-x^2/2} / sqrt(2^n n! sqrt(pi))."""
    x = np.asarray(x, dtype=float)
    p0 = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n == 0:
        return p0
    p1 = math.sqrt(2.0) * x * p0
    for k in range(1, n):
        p0, p1 = p1, math.sqrt(2.0 / (k + 1)) * x * p1 - math.sqrt(k / (k + 1)) * p0
    return p1


@dataclass(frozen=True)
class TestFunction:
    """psi_index((x - center)/scale)/sqrt(scale), or a mean-zero variant.

    ``hermite_meanzero`` keeps odd indices as they are (odd about the center) and
    replaces even ones by the difference of two copies shifted by +-scale/2,
    divided by sqrt(2).
    """

    __test__ = False  # not a pytest class

    family: Literal["hermite", "hermite_meanzero"] = "hermite"
    index: int = 0
    center: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in ("hermite", "hermite_meanzero"):
            raise DomainError(f"unknown test-function family {self.family!r}")
        if self.index < 0:
            raise DomainError("index must be nonnegative")
        if not self.scale > 0.0:
            raise DomainError("scale must be positive")

    def _standard(self, u):
        if self.family == "hermite" or self.index % 2 == 1:
            return hermite_function(self.index, u)
        return (hermite_function(self.index, u - 0.5) - hermite_function(self.index, u + 0.5)) / math.sqrt(2.0)

    def __call__(self, x):
        u = (np.asarray(x, dtype=float) - self.center) / self.scale
        return self._standard(u) / math.sqrt(self.scale)

    def support(self) -> tuple[float, float]:
        """Interval outside which |f| <= 1e-12 max |f|."""
        r = _standard_radius(self.family, self.index)
        return self.center - r * self.scale, self.center + r * self.scale

    def box(self) -> tuple[float, float]:
        lo, hi = self.support()
        return lo - BOX_PAD * self.scale, hi + BOX_PAD * self.scale

    def to_dict(self) -> dict:
        return asdict(self)


@lru_cache(maxsize=None)
def _standard_radius(family: str, index: int) -> float:
    u = np.linspace(-60.0, 60.0, 240001)
    y = np.abs(TestFunction(family, index)._standard(u))
    above = np.flatnonzero(y > SUPPORT_RTOL * y.max())
    return float(max(-u[above[0]], u[above[-1]])) + 1e-3


def eval_test_function(f: TestFunction, x):
    out = f(x)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-9
    max_subdivisions: int = 4000
    singularity_handling: Literal["split_at_diagonal"] = "split_at_diagonal"

    def __post_init__(self):
        if not self.abs_tol > 0.0:
            raise DomainError("abs_tol must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be >= 1")


@dataclass(frozen=True)
class PairingEstimate:
    value: float
    std_error: float
    method: Literal["monte_carlo", "quadrature"]
    n_replicas: int = 0

    def __post_init__(self):
        if self.std_error < 0.0:
            raise DomainError("std_error must be nonnegative")
        if self.method == "quadrature" and self.std_error != 0.0:
            raise DomainError("quadrature estimates carry no standard error")


@dataclass(frozen=True)
class Kernel:
    """K_H for h > 0, the limit kernel for h = 0, optionally shifted by a constant."""

    h: float = 0.0
    offset: float = 0.0

    @classmethod
    def kh(cls, h: float) -> "Kernel":
        if not 0.0 < h < 1.0:
            raise DomainError(f"h must lie in (0, 1), got {h}")
        return cls(float(h))

    @classmethod
    def limit(cls) -> "Kernel":
        return cls(0.0)

    def __call__(self, t, s):
        out = kh_total(t, s, self.h)
        return out + self.offset if self.offset else out


def _trapezoid_weights(points: np.ndarray) -> np.ndarray:
    dt = np.diff(points)
    w = np.zeros(points.size)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def _check_covered(grid: TimeGrid, f: TestFunction) -> None:
    lo, hi = f.support()
    g0, g1 = grid.points[0], grid.points[-1]
    if g0 <= lo and g1 >= hi:
        return
    mass = 0.0
    if g0 > lo:
        mass += integrate(lambda x: np.abs(f(x)), lo - 10 * f.scale, g0, abs_tol=1e-14)[0]
    if g1 < hi:
        mass += integrate(lambda x: np.abs(f(x)), g1, hi + 10 * f.scale, abs_tol=1e-14)[0]
    raise SupportError(f"grid [{g0:g}, {g1:g}] does not cover support [{lo:g}, {hi:g}]", mass)


def pair_path(values, grid: TimeGrid, f: TestFunction) -> float:
    """Trapezoidal <x, f> = int x_t f(t) dt for one path sampled on ``grid``."""
    _check_covered(grid, f)
    values = np.asarray(values, dtype=float)
    return float(np.dot(values, _trapezoid_weights(grid.points) * f(grid.points)))


def pair_ensemble(ensemble, fs: Sequence[TestFunction]) -> np.ndarray:
    """Pairings of every replica with every test function, shape (n_replicas, len(fs))."""
    for f in fs:
        _check_covered(ensemble.grid, f)
    w = _trapezoid_weights(ensemble.grid.points)
    W = np.stack([w * f(ensemble.grid.points) for f in fs], axis=1)
    return ensemble.paths @ W


def pairing_grid(fs: Sequence[TestFunction], step: float) -> TimeGrid:
    """Uniform grid through 0 with spacing ``step`` covering every support in ``fs``."""
    lo = min(min(f.support()[0] for f in fs), 0.0)
    hi = max(max(f.support()[1] for f in fs), 0.0)
    k0 = math.floor(lo / step)
    k1 = math.ceil(hi / step)
    return TimeGrid.uniform(k0 * step, step, k1 - k0 + 1)


def _tail_mass(f: TestFunction) -> float:
    lo, hi = f.box()
    far = 40.0 * f.scale
    a = integrate(lambda x: np.abs(f(x)), lo - far, lo, abs_tol=1e-18)[0]
    b = integrate(lambda x: np.abs(f(x)), hi, hi + far, abs_tol=1e-18)[0]
    return a + b


def _double_integral(kernel: Kernel, f1: TestFunction, f2: TestFunction, tol: float,
                     max_sub: int) -> tuple[float, float]:
    def F(t, s):
        return kernel(t, s) * f1(t) * f2(s)

    return integrate_rectangle_diagonal(F, f1.box(), f2.box(), abs_tol=tol,
                                        max_subdivisions=max_sub, kinks=(0.0,))


def double_integral_kernel(kernel: Kernel, f1: TestFunction, f2: TestFunction,
                           q: QuadratureSpec = QuadratureSpec()) -> PairingEstimate:
    """Quadrature of int int K(t, s) f1(t) f2(s) dt ds over R^2.

    The plane is truncated to the product of the test functions' boxes (effective
    support padded by two scale units); the discarded L1 mass of each function
    must stay below abs_tol / 10.  The value is computed at abs_tol and again at
    abs_tol / 4; the refined value is returned if the two agree within abs_tol.
    """
    for f in (f1, f2):
        tail = _tail_mass(f)
        if tail >= q.abs_tol / 10:
            raise QuadratureError(f"tail mass of {f} outside its box too large", math.nan, tail)
    coarse, _ = _double_integral(kernel, f1, f2, q.abs_tol, q.max_subdivisions)
    fine, err = _double_integral(kernel, f1, f2, q.abs_tol / 4, q.max_subdivisions)
    if abs(fine - coarse) > q.abs_tol:
        raise QuadratureError("refinement changed the value by more than abs_tol", fine,
                              abs(fine - coarse))
    return PairingEstimate(fine, 0.0, "quadrature", 0)


@dataclass
class ConvergenceReport:
    f1: TestFunction
    f2: TestFunction
    rows: list[dict]

    @property
    def gaps(self) -> list[float]:
        return [r["gap"] for r in self.rows]

    @property
    def monotone(self) -> bool:
        g = self.gaps
        return all(b < a for a, b in zip(g, g[1:]))

    def columns(self) -> list[str]:
        cols = ["h", "value", "limit_value", "gap"]
        if self.rows and "mc_value" in self.rows[0]:
            cols += ["mc_value", "mc_se", "mc_z"]
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        w = csv.DictWriter(buf, fieldnames=self.columns(), lineterminator="\n",
                           extrasaction="ignore")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: repr(float(r[k])) for k in self.columns()})
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"f1": self.f1.to_dict(), "f2": self.f2.to_dict(), "monotone": self.monotone,
               "rows": [{k: float(r[k]) for k in self.columns()} for r in self.rows]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def convergence_report(f1: TestFunction, f2: TestFunction, h_list: Sequence[float],
                       q: QuadratureSpec = QuadratureSpec()) -> ConvergenceReport:
    """Quadrature values of the K_H pairing along a decreasing h sweep, with gaps to the limit."""
    h_list = [float(h) for h in h_list]
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise DomainError("h_list must be strictly decreasing")
    limit = double_integral_kernel(Kernel.limit(), f1, f2, q).value
    rows = []
    for h in h_list:
        v = double_integral_kernel(Kernel.kh(h), f1, f2, q).value
        rows.append({"h": h, "value": v, "limit_value": limit, "gap": abs(v - limit)})
    return ConvergenceReport(f1, f2, rows)


def mc_pairing_covariance(fs: Sequence[TestFunction], h: float, n_replicas: int, seed: int, *,
                          step: float = 1.0 / 256, method: str = "auto",
                          threads: int = 1) -> dict[tuple[int, int], PairingEstimate]:
    """Monte Carlo E[<X^H, f_i><X^H, f_j>] for all i <= j.

    Paths are generated and paired in blocks, so memory stays bounded.  Pairings
    have mean zero exactly, so the estimator is the average of products and its
    standard error is their standard deviation over sqrt(n).
    """
    grid = pairing_grid(fs, step)
    k = len(fs)
    P = np.empty((n_replicas, k))
    for first in range(0, n_replicas, MC_BLOCK):
        count = min(MC_BLOCK, n_replicas - first)
        ens = sample_fbm(grid, h, count, seed, method=method, first_replica=first, threads=threads)
        P[first:first + count] = pair_ensemble(normalize_to_x(ens), fs)
    out = {}
    for i in range(k):
        for j in range(i, k):
            prod = P[:, i] * P[:, j]
            se = float(prod.std(ddof=1) / math.sqrt(n_replicas)) if n_replicas > 1 else 0.0
            out[(i, j)] = PairingEstimate(float(prod.mean()), se, "monte_carlo", n_replicas)
    return out
