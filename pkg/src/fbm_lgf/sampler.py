"""
Exact sampling of fractional Brownian motion on a time grid, and the
normalized field

    X^H_t = (B^H_t - (1/t) int_0^t B^H_u du) / sqrt(H),   X^H_0 = 0.

Two exact samplers are provided: dense Cholesky on any grid (up to
``CHOLESKY_MAX_POINTS``) and circulant embedding of fractional Gaussian noise on
uniform grids.  Every replica draws from its own Philox stream, derived from
(master_seed, replica_index) by an O(1) jump, so the output does not depend on
how replicas are split across worker threads.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import CovarianceError, DomainError

log = logging.getLogger(__name__)

CHOLESKY_MAX_POINTS = 4096
SAMPLER_MIN_H = 1e-3
EIGEN_CLIP_RTOL = 1e-10
CHOLESKY_JITTER = 1e-12
CHUNK = 256

__all__ = [
    "HurstParam",
    "TimeGrid",
    "RngSeedSpec",
    "PathEnsemble",
    "fgn_autocovariance",
    "fbm_covariance",
    "replica_rng",
    "sample_fbm_cholesky",
    "sample_fbm_circulant",
    "sample_fbm",
    "normalize_to_x",
    "write_ensemble_csv",
    "write_ensemble_binary",
    "read_ensemble_binary",
]


@dataclass(frozen=True)
class HurstParam:
    h: float

    def __post_init__(self):
        if not (isinstance(self.h, (int, float)) and 0.0 < float(self.h) < 1.0):
            raise DomainError(f"Hurst parameter must lie in (0, 1), got {self.h!r}")
        object.__setattr__(self, "h", float(self.h))

    def __float__(self) -> float:
        return self.h


def _h(h) -> float:
    return HurstParam(float(h)).h if not isinstance(h, HurstParam) else h.h


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing evaluation times; ``step`` is set for uniform grids."""

    points: np.ndarray
    kind: Literal["uniform", "explicit"] = "explicit"
    step: float | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise DomainError("a time grid needs at least 2 points")
        if not np.all(np.isfinite(pts)) or np.any(np.diff(pts) <= 0.0):
            raise DomainError("grid points must be finite and strictly increasing")
        if self.kind == "uniform" and not (self.step and self.step > 0.0):
            raise DomainError("uniform grids need a positive step")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, start: float, step: float, n_points: int) -> "TimeGrid":
        if n_points < 2 or step <= 0.0:
            raise DomainError("uniform grid needs n_points >= 2 and step > 0")
        pts = start + step * np.arange(n_points)
        return cls(pts, "uniform", float(step))

    @classmethod
    def linspace(cls, start: float, stop: float, n_points: int) -> "TimeGrid":
        if n_points < 2 or not stop > start:
            raise DomainError("linspace grid needs n_points >= 2 and stop > start")
        pts = np.linspace(start, stop, n_points)
        return cls(pts, "uniform", (stop - start) / (n_points - 1))

    @classmethod
    def explicit(cls, points: Sequence[float]) -> "TimeGrid":
        return cls(np.asarray(points, dtype=float), "explicit", None)

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        return (isinstance(other, TimeGrid) and self.kind == other.kind
                and self.step == other.step and np.array_equal(self.points, other.points))

    def zero_index(self) -> int | None:
        hit = np.flatnonzero(self.points == 0.0)
        return int(hit[0]) if hit.size else None

    def to_dict(self) -> dict:
        # points are stored verbatim so a round trip is bit-exact
        d = {"kind": self.kind, "points": self.points.tolist()}
        if self.kind == "uniform":
            d.update(start=float(self.points[0]), step=self.step, n_points=len(self))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TimeGrid":
        if "points" in d:
            return cls(np.asarray(d["points"], dtype=float), d["kind"], d.get("step"))
        return cls.uniform(d["start"], d["step"], d["n_points"])


@dataclass(frozen=True)
class RngSeedSpec:
    master_seed: int
    replica_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise DomainError("master_seed must be a 64-bit unsigned integer")
        if self.replica_index < 0:
            raise DomainError("replica_index must be nonnegative")


def replica_rng(master_seed: int, replica_index: int) -> np.random.Generator:
    """Independent counter-based stream for one replica.

    Stream i is the Philox sequence keyed by ``master_seed`` advanced by i jumps of
    2^128 draws, so distinct replicas never overlap.
    """
    spec = RngSeedSpec(int(master_seed), int(replica_index))
    bitgen = np.random.Philox(key=spec.master_seed)
    if spec.replica_index:
        bitgen = bitgen.jumped(spec.replica_index)
    return np.random.Generator(bitgen)


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Independent sampled paths on a shared grid.

    ``paths[i]`` holds replica ``first_replica + i``; one value per grid point.
    """

    grid: TimeGrid
    paths: np.ndarray
    hurst: HurstParam
    seed: int
    label: Literal["fbm", "normalized_x"]
    first_replica: int = 0
    method: str = field(default="", compare=False)

    def __post_init__(self):
        p = np.asarray(self.paths, dtype=float)
        if p.ndim != 2 or p.shape[1] != len(self.grid):
            raise DomainError(f"paths must have shape (n_replicas, {len(self.grid)}), got {p.shape}")
        if self.label not in ("fbm", "normalized_x"):
            raise DomainError(f"unknown label {self.label!r}")
        p.setflags(write=False)
        object.__setattr__(self, "paths", p)

    @property
    def n_replicas(self) -> int:
        return self.paths.shape[0]

    def metadata(self) -> dict:
        return {"grid": self.grid.to_dict(), "hurst": self.hurst.h, "seed": self.seed,
                "label": self.label, "first_replica": self.first_replica,
                "n_replicas": self.n_replicas, "n_points": len(self.grid)}


def fgn_autocovariance(k, h) -> float | np.ndarray:
    """Autocovariance of unit-step fBm increments, 0.5(|k+1|^2H - 2|k|^2H + |k-1|^2H)."""
    h2 = 2.0 * _h(h)
    k = np.abs(np.asarray(k, dtype=float))
    out = 0.5 * (np.abs(k + 1.0) ** h2 - 2.0 * k ** h2 + np.abs(k - 1.0) ** h2)
    return float(out) if out.ndim == 0 else out


def fbm_covariance(t, s, h) -> float | np.ndarray:
    """E[B_t B_s] = 0.5(|t|^2H + |s|^2H - |t-s|^2H)."""
    h2 = 2.0 * _h(h)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    out = 0.5 * (np.abs(t) ** h2 + np.abs(s) ** h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def _check_sampler_args(h, n_replicas: int, seed) -> tuple[float, int]:
    h = _h(h)
    if h < SAMPLER_MIN_H:
        raise DomainError(f"samplers require h >= {SAMPLER_MIN_H}, got {h}")
    if n_replicas < 1:
        raise DomainError("n_replicas must be >= 1")
    master = seed.master_seed if isinstance(seed, RngSeedSpec) else int(seed)
    RngSeedSpec(master)
    return h, master


def _normals(master: int, first: int, count: int, width: int) -> np.ndarray:
    out = np.empty((count, width))
    for i in range(count):
        out[i] = replica_rng(master, first + i).standard_normal(width)
    return out


def _run_chunks(fn, first: int, n: int, threads: int) -> np.ndarray:
    # chunk boundaries depend only on (first, n), never on the thread count
    starts = list(range(first, first + n, CHUNK))
    counts = [min(CHUNK, first + n - a) for a in starts]
    if threads <= 1 or len(starts) == 1:
        parts = [fn(a, c) for a, c in zip(starts, counts)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn, starts, counts))
    return np.vstack(parts)


def _cholesky_factor(grid: TimeGrid, h: float) -> tuple[np.ndarray, np.ndarray]:
    pts = grid.points
    live = np.flatnonzero(pts != 0.0)
    tl = pts[live]
    cov = fbm_covariance(tl[:, None], tl[None, :], h)
    try:
        return np.linalg.cholesky(cov), live
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(cov + CHOLESKY_JITTER * np.eye(tl.size)), live
    except np.linalg.LinAlgError as exc:
        raise CovarianceError(
            f"fBm covariance not positive definite on grid "
            f"[{pts[0]:g}, {pts[-1]:g}] ({pts.size} points) at H={h}"
        ) from exc


def sample_fbm_cholesky(grid: TimeGrid, h, n_replicas: int, seed, *,
                        first_replica: int = 0, threads: int = 1) -> PathEnsemble:
    """Exact fBm draws on any grid via the Cholesky factor of the covariance matrix."""
    h, master = _check_sampler_args(h, n_replicas, seed)
    if len(grid) > CHOLESKY_MAX_POINTS:
        raise DomainError(
            f"dense Cholesky limited to {CHOLESKY_MAX_POINTS} points (grid has {len(grid)}); "
            "use the circulant sampler"
        )
    L, live = _cholesky_factor(grid, h)

    def chunk(first: int, count: int) -> np.ndarray:
        z = _normals(master, first, count, live.size)
        out = np.zeros((count, len(grid)))
        out[:, live] = z @ L.T
        return out

    paths = _run_chunks(chunk, first_replica, n_replicas, threads)
    return PathEnsemble(grid, paths, HurstParam(h), master, "fbm", first_replica, "cholesky")


def _embedding_eigenvalues(n_incr: int, h: float) -> np.ndarray | None:
    gam = fgn_autocovariance(np.arange(n_incr + 1), h)
    row = np.concatenate([gam, gam[-2:0:-1]])
    lam = np.fft.fft(row).real
    top = lam.max()
    if lam.min() < -EIGEN_CLIP_RTOL * top:
        return None
    return np.clip(lam, 0.0, None)


def sample_fbm_circulant(grid: TimeGrid, h, n_replicas: int, seed, *,
                         first_replica: int = 0, threads: int = 1) -> PathEnsemble:
    """Exact fBm draws on a uniform grid containing t = 0, by circulant embedding.

    Fractional Gaussian noise with step Delta is drawn through the FFT of the
    embedded autocovariance, cumulatively summed, and re-anchored so that the
    path vanishes at t = 0.  Falls back to Cholesky (with a warning) when the
    embedding has eigenvalues below -1e-10 times the largest one.
    """
    h, master = _check_sampler_args(h, n_replicas, seed)
    if grid.kind != "uniform":
        raise DomainError("circulant sampler needs a uniform grid")
    z0 = grid.zero_index()
    if z0 is None:
        raise DomainError("circulant sampler needs t = 0 on the grid")
    n_incr = len(grid) - 1
    lam = _embedding_eigenvalues(n_incr, h)
    if lam is None:
        log.warning("negative circulant eigenvalues for n=%d, H=%g; falling back to Cholesky",
                    len(grid), h)
        return sample_fbm_cholesky(grid, h, n_replicas, seed,
                                   first_replica=first_replica, threads=threads)
    m = lam.size
    amp = np.sqrt(lam / m)
    scale = grid.step ** h

    def chunk(first: int, count: int) -> np.ndarray:
        z = _normals(master, first, count, 2 * m)
        w = amp * (z[:, :m] + 1j * z[:, m:])
        fgn = np.fft.fft(w, axis=1).real[:, :n_incr] * scale
        out = np.zeros((count, len(grid)))
        np.cumsum(fgn, axis=1, out=out[:, 1:])
        out -= out[:, z0:z0 + 1]
        return out

    paths = _run_chunks(chunk, first_replica, n_replicas, threads)
    return PathEnsemble(grid, paths, HurstParam(h), master, "fbm", first_replica, "circulant")


def sample_fbm(grid: TimeGrid, h, n_replicas: int, seed, *, method: str = "auto",
               first_replica: int = 0, threads: int = 1) -> PathEnsemble:
    """Dispatch to a sampler: circulant for uniform grids through 0, else Cholesky."""
    if method == "auto":
        method = "circulant" if grid.kind == "uniform" and grid.zero_index() is not None else "cholesky"
    if method == "circulant":
        return sample_fbm_circulant(grid, h, n_replicas, seed, first_replica=first_replica,
                                    threads=threads)
    if method == "cholesky":
        return sample_fbm_cholesky(grid, h, n_replicas, seed, first_replica=first_replica,
                                   threads=threads)
    raise DomainError(f"unknown sampling method {method!r}")


def running_mean_matrix(grid: TimeGrid) -> np.ndarray:
    """Matrix A with (A b)_j = (1/t_j) trapz_0^{t_j} b, row of the zero point left empty."""
    pts = grid.points
    z0 = grid.zero_index()
    n = pts.size
    A = np.zeros((n, n))
    for j in range(n):
        if j == z0:
            continue
        lo, hi = (z0, j) if j > z0 else (j, z0)
        dt = np.diff(pts[lo:hi + 1])
        w = np.zeros(hi - lo + 1)
        w[:-1] += 0.5 * dt
        w[1:] += 0.5 * dt
        sign = 1.0 if j > z0 else -1.0
        A[j, lo:hi + 1] = sign * w / pts[j]
    return A


def normalize_to_x(ensemble: PathEnsemble) -> PathEnsemble:
    """Map fBm paths to X^H with the trapezoidal rule for the running mean.

    The grid must contain t = 0.  For t < 0 the running integral is taken from 0
    backwards, matching (1/t) int_0^t.
    """
    if ensemble.label != "fbm":
        raise DomainError("normalize_to_x expects an ensemble labelled 'fbm'")
    z0 = ensemble.grid.zero_index()
    if z0 is None:
        raise DomainError("normalize_to_x needs t = 0 on the grid")
    pts = ensemble.grid.points
    B = ensemble.paths
    x = np.zeros_like(B)
    if z0 + 1 < pts.size:
        fwd = cumulative_trapezoid(B[:, z0:], pts[z0:], axis=1)
        x[:, z0 + 1:] = B[:, z0 + 1:] - fwd / pts[z0 + 1:]
    if z0 > 0:
        rev_t = pts[z0::-1]
        bwd = cumulative_trapezoid(B[:, z0::-1], rev_t, axis=1)
        x[:, z0 - 1::-1] = B[:, z0 - 1::-1] - bwd / rev_t[1:]
    x /= math.sqrt(ensemble.hurst.h)
    x[:, z0] = 0.0
    return PathEnsemble(ensemble.grid, x, ensemble.hurst, ensemble.seed, "normalized_x",
                        ensemble.first_replica, ensemble.method)


def write_ensemble_csv(ensemble: PathEnsemble, path: Path) -> None:
    """Columnar CSV with header ``replica,t,value``; LF line endings."""
    t = ensemble.grid.points
    with open(path, "w", newline="\n") as fh:
        fh.write("replica,t,value\n")
        for i, row in enumerate(ensemble.paths):
            block = np.column_stack([np.full(t.size, ensemble.first_replica + i), t, row])
            np.savetxt(fh, block, fmt=("%d", "%.17g", "%.17g"), delimiter=",", newline="\n")


def write_ensemble_binary(ensemble: PathEnsemble, path: Path) -> Path:
    """Little-endian float64, row-major replica x grid; JSON sidecar at ``path + .json``."""
    path = Path(path)
    np.ascontiguousarray(ensemble.paths, dtype="<f8").tofile(path)
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(ensemble.metadata(), indent=2, sort_keys=True) + "\n")
    return sidecar


def read_ensemble_binary(path: Path) -> PathEnsemble:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    grid = TimeGrid.from_dict(meta["grid"])
    data = np.fromfile(path, dtype="<f8").reshape(meta["n_replicas"], meta["n_points"])
    return PathEnsemble(grid, data, HurstParam(meta["hurst"]), meta["seed"], meta["label"],
                        meta.get("first_replica", 0))
