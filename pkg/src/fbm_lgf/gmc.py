"""
The approximate volatility measure

    xi^H_gamma(dt) = exp(gamma X^H_t - gamma^2/2 E[(X^H_t)^2]) dt,   delta <= t <= 1,

its moment scaling E[xi(B(t, r))^q] ~ r^zeta(q), and the Frisch-Parisi identity
linking zeta to the dimension of the singularity sets.

Cell weights use the left endpoint of each cell and the exact variance of X^H_t,
so E[weight] = cell width holds exactly.  All weights and ball masses are kept
in log space.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError
from .sampler import (CHOLESKY_MAX_POINTS, HurstParam, PathEnsemble, TimeGrid, normalize_to_x,
                      sample_fbm_cholesky)

SQRT2 = math.sqrt(2.0)
GMC_BLOCK = 1024

__all__ = [
    "GmcParams",
    "GmcMeasureSample",
    "SpectrumEstimate",
    "FrischParisiResult",
    "gmc_sampling_grid",
    "gmc_log_weights",
    "gmc_sample",
    "ball_mass",
    "log_ball_masses",
    "zeta_theory",
    "default_radii",
    "estimate_spectrum",
    "total_mass_moments",
    "frisch_parisi_dim",
    "golden_section_min",
]


@dataclass(frozen=True)
class GmcParams:
    gamma: float
    delta: float
    h: float
    n_cells: int = 512

    def __post_init__(self):
        if not 0.0 < self.gamma < SQRT2:
            raise DomainError(f"gamma must lie in (0, sqrt 2), got {self.gamma}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        HurstParam(self.h)
        if self.n_cells < 1:
            raise DomainError("n_cells must be >= 1")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.linspace(self.delta, 1.0, self.n_cells + 1)

    @property
    def step(self) -> float:
        return (1.0 - self.delta) / self.n_cells


def gmc_sampling_grid(params: GmcParams) -> TimeGrid:
    """Grid from 0 whose tail is exactly ``params.grid``.

    [0, delta) is filled with about the same spacing so that the running mean in
    X^H is resolved.  The grid is not uniform, so paths come from Cholesky.
    """
    m = max(1, math.ceil(params.delta / params.step))
    head = np.linspace(0.0, params.delta, m + 1)[:-1]
    pts = np.concatenate([head, params.grid.points])
    if pts.size > CHOLESKY_MAX_POINTS:
        raise DomainError(f"GMC sampling grid has {pts.size} points; at most "
                          f"{CHOLESKY_MAX_POINTS} supported")
    return TimeGrid.explicit(pts)


def _tail_offset(params: GmcParams, grid: TimeGrid) -> int:
    target = params.grid.points
    j = int(np.searchsorted(grid.points, params.delta))
    if j + target.size > len(grid) or not np.array_equal(grid.points[j:j + target.size], target):
        raise DomainError("ensemble grid does not contain the GMC grid on [delta, 1]")
    return j


def _variance(t: np.ndarray, h: float) -> np.ndarray:
    return np.abs(t) ** (2.0 * h) / (h * (2.0 * h + 2.0))


def gmc_log_weights(params: GmcParams, ensemble: PathEnsemble) -> np.ndarray:
    """Log cell weights, shape (n_replicas, n_cells), left-endpoint rule."""
    if ensemble.label != "normalized_x":
        raise DomainError("GMC weights need a normalized_x ensemble")
    if ensemble.hurst.h != params.h:
        raise DomainError(f"ensemble H={ensemble.hurst.h} differs from params h={params.h}")
    j = _tail_offset(params, ensemble.grid)
    left = params.grid.points[:-1]
    x = ensemble.paths[:, j:j + params.n_cells]
    g = params.gamma
    return g * x - 0.5 * g * g * _variance(left, params.h) + math.log(params.step)


@dataclass(frozen=True, eq=False)
class GmcMeasureSample:
    """One realization of the discretized measure; cells partition [delta, 1]."""

    params: GmcParams
    log_weights: np.ndarray

    def __post_init__(self):
        lw = np.asarray(self.log_weights, dtype=float)
        if lw.shape != (self.params.n_cells,):
            raise DomainError(f"expected {self.params.n_cells} cell weights, got {lw.shape}")
        if np.any(np.isnan(lw)) or np.any(lw == np.inf):
            raise DomainError("cell weights must be finite")
        lw.setflags(write=False)
        object.__setattr__(self, "log_weights", lw)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def cell_left(self) -> np.ndarray:
        return self.params.grid.points[:-1]

    def total_mass(self) -> float:
        return float(np.exp(logsumexp(self.log_weights)))

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        buf.write("t_cell,weight\n")
        for t, w in zip(self.cell_left, self.weights):
            buf.write(f"{float(t)!r},{float(w)!r}\n")
        return buf.getvalue()


def gmc_sample(params: GmcParams, ensemble: PathEnsemble, replica: int) -> GmcMeasureSample:
    """Measure built from replica ``replica`` (absolute index) of a normalized_x ensemble."""
    i = replica - ensemble.first_replica
    if not 0 <= i < ensemble.n_replicas:
        raise DomainError(f"replica {replica} not in ensemble")
    sub = PathEnsemble(ensemble.grid, ensemble.paths[i:i + 1], ensemble.hurst, ensemble.seed,
                       ensemble.label, replica)
    return GmcMeasureSample(params, gmc_log_weights(params, sub)[0])


def _overlap_fractions(params: GmcParams, centers, radii) -> np.ndarray:
    # fraction of each cell inside (x - r, x + r); shape (n_centers, n_radii, n_cells)
    pts = params.grid.points
    left, right = pts[:-1], pts[1:]
    c = np.asarray(centers, dtype=float)[:, None, None]
    r = np.asarray(radii, dtype=float)[None, :, None]
    ov = np.minimum(right, c + r) - np.maximum(left, c - r)
    return np.clip(ov, 0.0, None) / (right - left)


def log_ball_masses(params: GmcParams, log_w: np.ndarray, centers, radii) -> np.ndarray:
    """log xi(B(x, r)) for every replica, center and radius: shape (n_rep, n_centers, n_radii).

    Cells cut by the ball boundary are prorated linearly; empty balls give -inf.
    """
    frac = _overlap_fractions(params, centers, radii)
    with np.errstate(divide="ignore"):
        log_frac = np.log(frac)
    lw = np.atleast_2d(log_w)[:, None, None, :]
    return logsumexp(lw + log_frac[None], axis=-1)


def ball_mass(m: GmcMeasureSample, x: float, r: float) -> float:
    if not r > 0.0:
        raise DomainError("radius must be positive")
    lm = log_ball_masses(m.params, m.log_weights, [x], [r])[0, 0, 0]
    return float(np.exp(lm))


def zeta_theory(q, gamma: float):
    """(1 + gamma^2/2) q - gamma^2 q^2 / 2 on 0 < q < 2/gamma^2.

    Evaluated as q + gamma^2 q (1 - q) / 2 so that zeta(1) = 1 exactly.
    """
    qa = np.asarray(q, dtype=float)
    if np.any(qa <= 0.0) or np.any(qa >= 2.0 / gamma ** 2):
        raise DomainError(f"q must lie in (0, {2.0 / gamma ** 2:g}) for gamma={gamma}")
    g2 = gamma * gamma
    out = qa + 0.5 * g2 * qa * (1.0 - qa)
    return float(out) if out.ndim == 0 else out


def default_radii(params: GmcParams) -> list[float]:
    """Dyadic radii 2^-k from the smallest one >= 4 Delta up through one decade."""
    r_min_allowed = 4.0 * params.step
    r_max_allowed = (1.0 - params.delta) / 4.0
    k_hi = math.floor(-math.log2(r_min_allowed))
    r_small = 2.0 ** -k_hi
    radii = [r_small]
    k = k_hi
    while radii[-1] < 10.0 * r_small:
        k -= 1
        if 2.0 ** -k >= r_max_allowed:
            break
        radii.append(2.0 ** -k)
    if len(radii) < 2:
        raise DomainError("grid too coarse for a dyadic radius sweep")
    return sorted(radii, reverse=True)


def _centers(params: GmcParams, mode: str) -> list[float]:
    d = params.delta
    if mode == "midpoint":
        return [(1.0 + d) / 2.0]
    if mode == "multi":
        return [d + (1.0 - d) * f for f in (0.3, 0.4, 0.5, 0.6, 0.7)]
    raise DomainError(f"unknown centers mode {mode!r}")


@dataclass
class SpectrumEstimate:
    q_values: list[float]
    zeta_hat: list[float]
    zeta_se: list[float]
    zeta_theory: list[float]
    r_range: list[float]
    regression_r2: list[float]
    n_replicas: int
    log_moments: list[list[float]] = field(default_factory=list)
    overflow: list[tuple[float, float]] = field(default_factory=list)

    def rows(self) -> list[dict]:
        return [dict(q=q, zeta_hat=z, zeta_se=se, zeta_theory=zt, r2=r2)
                for q, z, se, zt, r2 in zip(self.q_values, self.zeta_hat, self.zeta_se,
                                            self.zeta_theory, self.regression_r2)]

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        w = csv.DictWriter(buf, fieldnames=["q", "zeta_hat", "zeta_se", "zeta_theory", "r2"],
                           lineterminator="\n")
        w.writeheader()
        for r in self.rows():
            w.writerow({k: repr(float(v)) for k, v in r.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "q_values": self.q_values, "zeta_hat": self.zeta_hat, "zeta_se": self.zeta_se,
            "zeta_theory": self.zeta_theory, "r_range": self.r_range,
            "regression_r2": self.regression_r2, "n_replicas": self.n_replicas,
            "log_moments": self.log_moments, "overflow": [list(x) for x in self.overflow],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    n = x.size
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    resid = y - ym - slope * (x - xm)
    sse = float(np.sum(resid ** 2))
    sst = float(np.sum((y - ym) ** 2))
    se = math.sqrt(sse / (n - 2) / sxx) if n > 2 else 0.0
    r2 = 1.0 - sse / sst if sst > 0.0 else 1.0
    return slope, se, r2


def _x_blocks(params: GmcParams, n_replicas: int, seed: int, threads: int):
    grid = gmc_sampling_grid(params)
    for first in range(0, n_replicas, GMC_BLOCK):
        count = min(GMC_BLOCK, n_replicas - first)
        ens = sample_fbm_cholesky(grid, params.h, count, seed, first_replica=first,
                                  threads=threads)
        yield normalize_to_x(ens)


def total_mass_moments(params: GmcParams, n_replicas: int, seed: int,
                       threads: int = 1) -> tuple[float, float]:
    """Monte Carlo mean of xi^H([delta, 1]) and its standard error."""
    masses = np.concatenate([
        np.exp(logsumexp(gmc_log_weights(params, x), axis=1))
        for x in _x_blocks(params, n_replicas, seed, threads)
    ])
    se = float(masses.std(ddof=1) / math.sqrt(masses.size)) if masses.size > 1 else 0.0
    return float(masses.mean()), se


def estimate_spectrum(params: GmcParams, q_list: Sequence[float],
                      r_list: Sequence[float] | None = None, n_replicas: int = 2000,
                      seed: int = 0, centers: str = "midpoint",
                      threads: int = 1) -> SpectrumEstimate:
    """Regress log E[xi(B(c, r))^q] on log r; the slope estimates zeta(q).

    Moments are averaged over replicas (and over centers in ``multi`` mode) in log
    space.  Radii must satisfy 4 Delta <= r < (1 - delta)/4.
    """
    q = [float(v) for v in q_list]
    zt = [zeta_theory(v, params.gamma) for v in q]
    radii = sorted((float(r) for r in (r_list or default_radii(params))), reverse=True)
    if len(radii) < 2 or len(set(radii)) != len(radii):
        raise DomainError("need at least two distinct radii")
    for r in radii:
        if not 4.0 * params.step <= r < (1.0 - params.delta) / 4.0:
            raise DomainError(
                f"radius {r} unresolved or not interior: need {4 * params.step:g} <= r < "
                f"{(1 - params.delta) / 4:g}")
    cs = _centers(params, centers)
    lm = np.concatenate([
        log_ball_masses(params, gmc_log_weights(params, x), cs, radii)
        for x in _x_blocks(params, n_replicas, seed, threads)
    ])
    n_samples = lm.shape[0] * lm.shape[1]
    log_r = np.log(radii)
    zh, zse, r2s, log_moments, overflow = [], [], [], [], []
    for qv in q:
        lmom = logsumexp(qv * lm, axis=(0, 1)) - math.log(n_samples)
        for r, v in zip(radii, lmom):
            if not np.isfinite(v):
                overflow.append((qv, r))
        ok = np.isfinite(lmom)
        slope, se, r2 = _ols(log_r[ok], lmom[ok]) if ok.sum() >= 2 else (math.nan,) * 3
        zh.append(slope)
        zse.append(se)
        r2s.append(r2)
        log_moments.append([float(v) for v in lmom])
    return SpectrumEstimate(q, zh, zse, zt, radii, r2s, n_replicas, log_moments, overflow)


INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_min(f, lo: float, hi: float, xtol: float = 1e-10) -> float:
    """Minimizer of a unimodal function on [lo, hi] by golden-section search."""
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _parabolic_polish(f, x: float, d: float) -> float:
    # one parabola through x - d, x, x + d; golden section alone stalls near
    # sqrt(eps) relative accuracy because f is flat at its minimum
    fa, fb, fc = f(x - d), f(x), f(x + d)
    curv = fa - 2.0 * fb + fc
    if not curv > 0.0:
        return x
    step = 0.5 * d * (fa - fc) / curv
    return x + step if abs(step) < d else x


class FrischParisiResult(NamedTuple):
    dim: float
    argmin_p: float
    closed_form: float


def frisch_parisi_dim(gamma: float, r: float) -> FrischParisiResult:
    """inf_p { p (1 + (1/2 - r) gamma^2) - zeta(p) + 1 } by golden-section search.

    The search interval is [-10, 10], widened when needed to contain the admissible
    range of r, and the golden-section result is refined by one parabolic step.
    ``closed_form`` is 1 - gamma^2 r^2 / 2.
    """
    if not 0.0 < gamma < SQRT2:
        raise DomainError(f"gamma must lie in (0, sqrt 2), got {gamma}")
    if not 0.0 < r < SQRT2 / gamma:
        raise DomainError(f"r must lie in (0, sqrt2/gamma) = (0, {SQRT2 / gamma:g}), got {r}")
    g2 = gamma * gamma
    slope = 1.0 + (0.5 - r) * g2

    def objective(p: float) -> float:
        # zeta extended to all real p; the quadratic is defined everywhere
        return p * slope - ((1.0 + 0.5 * g2) * p - 0.5 * g2 * p * p) + 1.0

    hi = max(10.0, 2.0 * SQRT2 / gamma)
    p_star = _parabolic_polish(objective, golden_section_min(objective, -10.0, hi), 1e-2)
    return FrischParisiResult(objective(p_star), p_star, 1.0 - 0.5 * g2 * r * r)
