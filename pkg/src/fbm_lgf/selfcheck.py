"""
Fast invariant suite: symmetries, bounds and closed-form vs quadrature spot checks.

Every check is deterministic given the seed, and the report carries no timings,
so two runs with the same seed produce the same text.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gmc, kernels, oracle, sampler


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _close(name: str, got: float, want: float, tol: float) -> CheckResult:
    err = abs(got - want)
    ok = bool(err <= tol)
    return CheckResult(name, ok, f"got {got!r} want {want!r} |err| {err:.3e} tol {tol:g}")


def _random_pairs(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    t = rng.uniform(0.05, 3.0, n) * rng.choice([-1.0, 1.0], n)
    s = rng.uniform(0.05, 3.0, n) * rng.choice([-1.0, 1.0], n)
    keep = np.abs(t - s) > 1e-3
    return t[keep], s[keep]


def _scalar_checks() -> list[CheckResult]:
    out = [
        _close("stable_pow_ratio(1, 0.3)", kernels.stable_pow_ratio(1.0, 0.3), 0.0, 0.0),
        _close("stable_pow_ratio(e, 0.5)", kernels.stable_pow_ratio(math.e, 0.5), math.e - 1.0, 1e-14),
        _close("stable_pow_ratio(2, 1e-8)", kernels.stable_pow_ratio(2.0, 1e-8), math.log(2.0), 1e-6),
        _close("fgn_autocovariance(0, 0.3)", sampler.fgn_autocovariance(0, 0.3), 1.0, 1e-15),
        _close("fgn_autocovariance(1, 0.5)", sampler.fgn_autocovariance(1, 0.5), 0.0, 1e-15),
        _close("fbm_covariance(1, 2, 0.5)", sampler.fbm_covariance(1.0, 2.0, 0.5), 1.0, 1e-15),
        _close("zeta_theory(1, 0.5)", gmc.zeta_theory(1.0, 0.5), 1.0, 1e-15),
        _close("zeta_theory(2, 0.5)", gmc.zeta_theory(2.0, 0.5), 1.75, 1e-15),
    ]
    return out


def _oracle_checks() -> list[CheckResult]:
    out = []
    for t, s, h in [(2.0, 1.0, 0.5), (0.6, -0.2, 0.1), (-0.5, -1.5, 0.3), (1.0, -1.0, 0.05)]:
        out.append(_close(f"kernel_kh({t}, {s}, {h}) vs quadrature",
                          kernels.kernel_kh(t, s, h).total, oracle.kh_oracle(t, s, h), 1e-9))
    for t, s in [(2.0, 1.0), (0.7, 0.3), (1.0, -1.0), (-0.4, 0.9)]:
        out.append(_close(f"kernel_limit({t}, {s}) vs quadrature",
                          kernels.kernel_limit(t, s).total, oracle.limit_oracle(t, s), 1e-8))
    out.append(_close("kernel_kh_diag(1, 0.5) vs quadrature",
                      kernels.kernel_kh_diag(1.0, 0.5), oracle.kh_oracle(1.0, 1.0, 0.5), 1e-9))
    for x, eps in [(0.3, 0.1), (0.05, 0.2), (0.9, 0.5), (0.5, 0.5)]:
        out.append(_close(f"cone_kernel({x}, eps={eps}) vs quadrature",
                          kernels.cone_kernel(x, kernels.ConeKernelSpec(eps)),
                          oracle.cone_oracle(x, eps), 1e-8))
    return out


def _symmetry_checks(rng: np.random.Generator, n: int) -> list[CheckResult]:
    t, s = _random_pairs(rng, n)
    out = []
    for h in (0.3, 0.05, 0.0):
        k = kernels.kh_total(t, s, h)
        swap = np.max(np.abs(k - kernels.kh_total(s, t, h)))
        flip = np.max(np.abs(k - kernels.kh_total(-t, -s, h)) / np.maximum(1.0, np.abs(k)))
        out.append(CheckResult(f"kernel symmetry h={h}", bool(swap == 0.0 and flip <= 1e-12),
                               f"max swap diff {swap:.3e}, max sign-flip rel diff {flip:.3e}"))
    return out


def _bound_checks(rng: np.random.Generator, n: int) -> list[CheckResult]:
    t, s = _random_pairs(rng, n)
    h = rng.uniform(1e-4, 0.5, t.size)
    excess = np.array([kernels.i24_excess(a, b, c) for a, b, c in zip(t, s, h)])
    bound = np.array([kernels.corrected_bound_values(a, b, c) for a, b, c in zip(t, s, h)])
    bad = int(np.sum(np.abs(excess) > bound * (1.0 + 1e-9) + 1e-12))
    out = [CheckResult("dominating bounds (L1, corrected mixed-sign)", bad == 0,
                       f"{bad} violations in {t.size} triples")]

    delta = 0.1
    u = rng.uniform(delta, 1.0, (n, 2))
    hu = rng.uniform(1e-3, 0.45, n)
    keep = u[:, 0] != u[:, 1]
    slack = [kernels.kernel_kh_upper(a, b, c, delta) - kernels.kernel_kh(a, b, c).total
             for (a, b), c in zip(u[keep], hu[keep])]
    worst = float(min(slack))
    out.append(CheckResult("kernel upper bound on [0.1, 1]^2", worst >= 0.0,
                           f"min slack {worst:.3e} over {len(slack)} points"))
    return out


def _limit_checks() -> list[CheckResult]:
    out = []
    hs = (1e-1, 1e-2, 1e-3, 1e-4)
    for t, s in kernels.DEFAULT_PROBES:
        lim = kernels.kernel_limit(t, s).total
        gaps = [abs(kernels.kernel_kh(t, s, h).total - lim) for h in hs]
        ok = kernels.strictly_decreasing(gaps) and gaps[-1] <= 1e-2
        out.append(CheckResult(f"kernel limit at ({t}, {s})", ok,
                               "gaps " + ", ".join(f"{g:.3e}" for g in gaps)))
    return out


def _frisch_parisi_checks() -> list[CheckResult]:
    worst_dim = worst_arg = 0.0
    for g in np.linspace(0.1, 1.3, 10):
        for frac in np.linspace(0.05, 0.95, 10):
            r = frac * math.sqrt(2.0) / g
            res = gmc.frisch_parisi_dim(float(g), float(r))
            worst_dim = max(worst_dim, abs(res.dim - res.closed_form))
            worst_arg = max(worst_arg, abs(res.argmin_p - r))
    ok = worst_dim <= 1e-6 and worst_arg <= 1e-6
    return [CheckResult("Frisch-Parisi identity", ok,
                        f"max |dim err| {worst_dim:.3e}, max |p* - r| {worst_arg:.3e}")]


def _sampler_checks(seed: int) -> list[CheckResult]:
    grid = sampler.TimeGrid.linspace(0.0, 1.0, 65)
    a = sampler.sample_fbm_circulant(grid, 0.3, 300, seed, threads=1)
    b = sampler.sample_fbm_circulant(grid, 0.3, 300, seed, threads=4)
    out = [CheckResult("sampler thread independence", bool(np.array_equal(a.paths, b.paths)),
                       "circulant paths identical for 1 and 4 threads")]
    x = sampler.normalize_to_x(a)
    pinned = bool(np.all(a.paths[:, 0] == 0.0) and np.all(x.paths[:, 0] == 0.0))
    out.append(CheckResult("paths pinned at t = 0", pinned, "B_0 = X_0 = 0 on every replica"))
    m = sampler.running_mean_matrix(grid)
    direct = (a.paths - a.paths @ m.T) / math.sqrt(0.3)
    err = float(np.max(np.abs(direct - x.paths)))
    out.append(CheckResult("normalize_to_x is the linear running-mean map", err <= 1e-12,
                           f"max diff {err:.3e}"))
    return out


def run_selfcheck(seed: int = 0, n_random: int = 2000) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    results += _scalar_checks()
    results += _oracle_checks()
    results += _symmetry_checks(rng, n_random)
    results += _bound_checks(rng, n_random)
    results += _limit_checks()
    results += _frisch_parisi_checks()
    results += _sampler_checks(seed)
    return results


def format_report(results: list[CheckResult]) -> str:
    n_fail = sum(not r.passed for r in results)
    lines = [r.line() for r in results]
    lines.append(f"{len(results) - n_fail}/{len(results)} checks passed")
    return "\n".join(lines) + "\n"
