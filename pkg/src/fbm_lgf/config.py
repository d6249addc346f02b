"""
Validated run configurations for the command-line driver.

Each subcommand reads one JSON document; unknown keys are rejected so that a
typo never silently falls back to a default.  Validators call into the domain
modules, so a config that passes here will not be rejected mid-run.
"""

from __future__ import annotations

import math
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import DomainError
from .gmc import GmcParams, default_radii, gmc_sampling_grid, zeta_theory
from .kernels import DEFAULT_PROBES
from .pairing import TestFunction
from .sampler import CHOLESKY_MAX_POINTS, SAMPLER_MIN_H, TimeGrid

SEED_MAX = 2 ** 64 - 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Strict):
    kind: Literal["uniform", "explicit"] = "uniform"
    start: float = 0.0
    step: Optional[float] = Field(default=None, gt=0.0)
    n_points: Optional[int] = Field(default=None, ge=2)
    points: Optional[list[float]] = None

    @model_validator(mode="after")
    def _complete(self):
        if self.kind == "uniform":
            if self.step is None or self.n_points is None:
                raise ValueError("uniform grid needs step and n_points")
        elif not self.points:
            raise ValueError("explicit grid needs points")
        try:
            self.build()
        except DomainError as exc:
            raise ValueError(str(exc)) from exc
        return self

    def build(self) -> TimeGrid:
        if self.kind == "uniform":
            return TimeGrid.uniform(self.start, self.step, self.n_points)
        return TimeGrid.explicit(self.points)


class SampleConfig(_Strict):
    h: float = Field(ge=SAMPLER_MIN_H, lt=1.0)
    grid: GridConfig
    n_replicas: int = Field(ge=1)
    seed: int = Field(default=0, ge=0, le=SEED_MAX)
    method: Literal["auto", "cholesky", "circulant"] = "auto"
    normalize: bool = False
    formats: list[Literal["csv", "binary"]] = ["csv", "binary"]

    @model_validator(mode="after")
    def _sampler_fits(self):
        g = self.grid.build()
        if self.method == "circulant" and g.kind != "uniform":
            raise ValueError("circulant sampling needs a uniform grid")
        if self.method == "circulant" and g.zero_index() is None:
            raise ValueError("circulant sampling needs a grid containing t = 0")
        if self.method == "cholesky" and len(g) > CHOLESKY_MAX_POINTS:
            raise ValueError(f"cholesky sampling limited to {CHOLESKY_MAX_POINTS} points")
        if self.normalize and g.zero_index() is None:
            raise ValueError("normalize needs a grid containing t = 0")
        if not self.formats:
            raise ValueError("at least one output format is required")
        return self


class KernelTableConfig(_Strict):
    probes: list[tuple[float, float]] = [tuple(p) for p in DEFAULT_PROBES]
    h_values: list[float] = [1e-1, 1e-2, 1e-3, 1e-4]
    check_monotone: bool = True

    @field_validator("probes")
    @classmethod
    def _regular(cls, v):
        if not v:
            raise ValueError("need at least one probe point")
        for t, s in v:
            if t == 0.0 or s == 0.0 or t == s:
                raise ValueError(f"singular probe point (t, s) = ({t}, {s})")
        return v

    @field_validator("h_values")
    @classmethod
    def _h_range(cls, v):
        if not v or any(not 0.0 < h < 1.0 for h in v):
            raise ValueError("h_values must be nonempty and inside (0, 1)")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("h_values must be strictly decreasing")
        return v


class TestFunctionConfig(_Strict):
    __test__ = False

    index: int = Field(default=0, ge=0)
    center: float = 0.7
    scale: float = Field(default=0.2, gt=0.0)

    def build(self, mean_zero: bool) -> TestFunction:
        return TestFunction("hermite_meanzero" if mean_zero else "hermite",
                            self.index, self.center, self.scale)


class ConvergePairingConfig(_Strict):
    f1: TestFunctionConfig = TestFunctionConfig()
    f2: TestFunctionConfig = TestFunctionConfig()
    mean_zero: bool = False
    h_values: list[float] = [0.5, 0.3, 0.1, 0.05]
    abs_tol: float = Field(default=1e-9, gt=0.0)
    replicas: int = Field(default=0, ge=0)
    mc_step: float = Field(default=1.0 / 1024, gt=0.0, le=0.1)
    seed: int = Field(default=0, ge=0, le=SEED_MAX)
    check_monotone: bool = True

    @field_validator("h_values")
    @classmethod
    def _h_range(cls, v):
        if not v or any(not 0.0 < h < 1.0 for h in v):
            raise ValueError("h_values must be nonempty and inside (0, 1)")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("h_values must be strictly decreasing")
        return v

    @model_validator(mode="after")
    def _mc_floor(self):
        if self.replicas > 0 and min(self.h_values) < SAMPLER_MIN_H:
            raise ValueError(f"Monte Carlo check needs every h >= {SAMPLER_MIN_H}")
        return self


class GmcSpectrumConfig(_Strict):
    gamma: float = Field(default=0.5, gt=0.0, lt=math.sqrt(2.0))
    delta: float = Field(default=0.1, gt=0.0, lt=1.0)
    h: float = Field(default=0.02, ge=SAMPLER_MIN_H, lt=1.0)
    n_cells: int = Field(default=512, ge=8)
    q_values: list[float] = [0.5, 1.0, 1.5, 2.0]
    r_values: Optional[list[float]] = None
    n_replicas: int = Field(default=2000, ge=2)
    seed: int = Field(default=0, ge=0, le=SEED_MAX)
    centers: Literal["midpoint", "multi"] = "midpoint"
    export_sample: bool = True
    fp_gammas: list[float] = [0.1 + 0.13 * i for i in range(10)]
    fp_r_fractions: list[float] = [(j + 0.5) / 10 for j in range(10)]

    @model_validator(mode="after")
    def _domain(self):
        try:
            p = self.params()
            gmc_sampling_grid(p)
            zeta_theory(self.q_values, self.gamma)
            radii = self.r_values if self.r_values is not None else default_radii(p)
        except DomainError as exc:
            raise ValueError(str(exc)) from exc
        if len(radii) < 2 or len(set(radii)) != len(radii):
            raise ValueError("need at least two distinct radii")
        for r in radii:
            if not 4.0 * p.step <= r < (1.0 - p.delta) / 4.0:
                raise ValueError(f"radius {r} outside [{4 * p.step:g}, {(1 - p.delta) / 4:g})")
        if any(not 0.0 < g < math.sqrt(2.0) for g in self.fp_gammas):
            raise ValueError("fp_gammas must lie in (0, sqrt 2)")
        if any(not 0.0 < f < 1.0 for f in self.fp_r_fractions):
            raise ValueError("fp_r_fractions must lie in (0, 1)")
        return self

    def params(self) -> GmcParams:
        return GmcParams(self.gamma, self.delta, self.h, self.n_cells)


class SelfcheckConfig(_Strict):
    seed: int = Field(default=0, ge=0, le=SEED_MAX)
    n_random: int = Field(default=2000, ge=10)


CONFIG_MODELS = {
    "sample": SampleConfig,
    "kernel-table": KernelTableConfig,
    "converge-pairing": ConvergePairingConfig,
    "gmc-spectrum": GmcSpectrumConfig,
    "selfcheck": SelfcheckConfig,
}
