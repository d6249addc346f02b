import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbm_lgf import kernels
from fbm_lgf.errors import DomainError, SingularInputError
from fbm_lgf.kernels import (ConeKernelSpec, cone_kernel, corrected_bound_values, dominating_bound,
                             dominating_bound_values, i24_excess, kernel_kh, kernel_kh_diag,
                             kernel_kh_upper, kernel_limit, kh_total, stable_pow_ratio)
from fbm_lgf.oracle import cone_oracle, kh_oracle, limit_oracle

# frozen oracle values: nested scipy quad of the defining averages of the fBm
# covariance (kh_oracle) and of log|u - v| (limit_oracle), abs tol 1e-13
FROZEN_KH = {
    (0.6, -0.2, 0.1): 0.10531043281950425,
    (-0.5, -1.5, 0.3): 0.07234497030311315,
    (1.0, -1.0, 0.05): 0.17318847056645992,
}
FROZEN_LIMIT = {
    (0.7, 0.3): 0.09123892754213614,
    (-0.4, 0.9): 0.17561371016134752,
}

nonzero = st.floats(0.01, 50.0).flatmap(lambda x: st.sampled_from([x, -x]))


class TestStablePowRatio:
    def test_one(self):
        assert stable_pow_ratio(1.0, 0.3) == 0.0

    def test_e_at_half(self):
        assert stable_pow_ratio(math.e, 0.5) == pytest.approx(math.e - 1.0, abs=1e-14)

    def test_small_h_matches_high_precision(self):
        mpmath.mp.dps = 50
        ref = (mpmath.mpf(2) ** (2 * mpmath.mpf("1e-8")) - 1) / (2 * mpmath.mpf("1e-8"))
        got = stable_pow_ratio(2.0, 1e-8)
        print(f"(2^2h - 1)/2h at h=1e-8: {got!r} vs {float(ref)!r}")
        assert abs(got - float(ref)) < 1e-12
        assert abs(got - math.log(2.0)) < 1e-6

    @pytest.mark.parametrize("x", [0.0, -1.0])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            stable_pow_ratio(x, 0.2)

    @given(st.floats(1e-3, 1e3), st.floats(1e-12, 1e-6))
    def test_converges_to_log(self, x, h):
        assert abs(stable_pow_ratio(x, h) - math.log(x)) <= 2 * h * math.log(x) ** 2 + 1e-12


class TestKernelClosedForm:
    def test_brownian_probe(self):
        k = kernel_kh(2.0, 1.0, 0.5)
        print(f"K_0.5(2,1) = {k.total!r}, oracle {kh_oracle(2.0, 1.0, 0.5)!r}")
        assert abs(k.total - 1.0 / 3.0) < 1e-12
        assert abs(k.total - kh_oracle(2.0, 1.0, 0.5)) < 1e-9

    def test_limit_probe(self):
        k = kernel_limit(2.0, 1.0)
        assert abs(k.total - (math.log(2.0) - 0.5)) < 1e-12
        assert abs(k.total - limit_oracle(2.0, 1.0)) < 1e-6

    @pytest.mark.parametrize("t,s,h", list(FROZEN_KH))
    def test_against_frozen_oracle(self, t, s, h):
        assert kernel_kh(t, s, h).total == pytest.approx(FROZEN_KH[(t, s, h)], abs=1e-9)

    @pytest.mark.parametrize("t,s", list(FROZEN_LIMIT))
    def test_limit_against_frozen_oracle(self, t, s):
        assert kernel_limit(t, s).total == pytest.approx(FROZEN_LIMIT[(t, s)], abs=1e-8)

    @pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
    @pytest.mark.parametrize("t,s,h", [(1.3, 0.4, 0.2), (-0.8, 0.5, 0.45), (-2.5, -0.3, 0.02),
                                       (0.9, -1.1, 0.01)])
    def test_live_oracle(self, t, s, h):
        assert kernel_kh(t, s, h).total == pytest.approx(kh_oracle(t, s, h), abs=1e-9)
        assert kernel_limit(t, s).total == pytest.approx(limit_oracle(t, s), abs=1e-8)

    def test_decomposition_sums(self):
        k = kernel_kh(1.5, 0.4, 0.2)
        assert k.i1 + k.i2 + k.i3 + k.i4 == pytest.approx(k.total, abs=1e-12)
        assert k.i1 == pytest.approx(-(1.1 ** 0.4) / 0.4, rel=1e-14)

    @pytest.mark.parametrize("t,s", [(0.0, 1.0), (1.0, 0.0), (0.5, 0.5)])
    def test_singular(self, t, s):
        with pytest.raises(SingularInputError):
            kernel_kh(t, s, 0.3)
        with pytest.raises(SingularInputError):
            kernel_limit(t, s)

    @pytest.mark.parametrize("h", [0.0, 1.0, -0.1])
    def test_bad_h(self, h):
        with pytest.raises(DomainError):
            kernel_kh(2.0, 1.0, h)

    def test_diag(self):
        assert kernel_kh_diag(1.0, 0.5) == pytest.approx(2.0 / 3.0, abs=1e-15)
        assert kernel_kh_diag(0.0, 0.3) == 0.0
        assert kernel_kh_diag(1.7, 0.2) == pytest.approx(kh_oracle(1.7, 1.7, 0.2), abs=1e-9)

    def test_diag_is_limit_of_offdiag(self):
        # K_H(t, t + e) = Var - e^{2H}/(2H) + O(e): continuous up to the diagonal
        var = kernel_kh_diag(1.0, 0.3)
        gaps = [var - kh_total(1.0, 1.0 + e, 0.3) for e in (1e-3, 1e-5, 1e-7)]
        assert kernels.strictly_decreasing(gaps)
        assert gaps[-1] == pytest.approx(1e-7 ** 0.6 / 0.6, rel=1e-2)


class TestKernelSymmetry:
    @settings(max_examples=200)
    @given(nonzero, nonzero, st.floats(1e-4, 0.99))
    def test_swap_exact(self, t, s, h):
        if t == s:
            return
        assert kh_total(t, s, h) == kh_total(s, t, h)
        a, b = kernel_kh(t, s, h), kernel_kh(s, t, h)
        assert (a.i2, a.i3) == (b.i3, b.i2)

    @settings(max_examples=200)
    @given(nonzero, nonzero, st.floats(0.0, 0.99))
    def test_sign_flip(self, t, s, h):
        if t == s:
            return
        a, b = kh_total(t, s, h), kh_total(-t, -s, h)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)

    @settings(max_examples=100)
    @given(st.floats(0.05, 5.0), st.floats(0.05, 5.0), st.floats(1e-3, 0.49),
           st.floats(0.2, 5.0))
    def test_self_similarity(self, t, s, h, a):
        # X^H inherits H-self-similarity from B^H
        if abs(t - s) < 1e-3:
            return
        assert kh_total(a * t, a * s, h) == pytest.approx(a ** (2 * h) * kh_total(t, s, h),
                                                          rel=1e-9, abs=1e-10)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(3)
        t = rng.uniform(-3, 3, 200)
        s = rng.uniform(-3, 3, 200)
        v = kh_total(t, s, 0.15)
        for i in range(0, 200, 17):
            assert v[i] == kernel_kh(t[i], s[i], 0.15).total

    def test_zero_arguments(self):
        assert kh_total(0.0, 1.3, 0.2) == 0.0
        assert kh_total(-0.4, 0.0, 0.0) == 0.0


class TestKernelLimit:
    @pytest.mark.parametrize("t,s", kernels.DEFAULT_PROBES)
    def test_monotone_gaps(self, t, s):
        lim = kernel_limit(t, s).total
        gaps = [abs(kernel_kh(t, s, h).total - lim) for h in (1e-1, 1e-2, 1e-3, 1e-4)]
        print(f"({t}, {s}) gaps {[f'{g:.2e}' for g in gaps]}")
        assert kernels.strictly_decreasing(gaps)
        assert gaps[-1] <= 1e-2

    def test_gap_is_first_order(self):
        lim = kernel_limit(0.6, -0.2).total
        g1 = abs(kernel_kh(0.6, -0.2, 1e-3).total - lim)
        g2 = abs(kernel_kh(0.6, -0.2, 1e-4).total - lim)
        assert g1 / g2 == pytest.approx(10.0, rel=0.05)


class TestDominatingBounds:
    def test_same_sign_hold(self):
        rng = np.random.default_rng(11)
        mag = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), (20000, 2)))
        sign = rng.choice([-1.0, 1.0], 20000)
        t, s = sign * mag[:, 0], sign * mag[:, 1]
        h = rng.uniform(1e-4, 0.5, 20000)
        ex = np.array([abs(float(i24_excess(a, b, c))) for a, b, c in zip(t, s, h)])
        bound = np.array([dominating_bound_values(a, b, c)[0] for a, b, c in zip(t, s, h)])
        assert np.all(ex <= bound * (1 + 1e-12) + 1e-12)

    def test_mixed_sign_counterexample(self):
        # near (1, -1) the L2 majorant is too small; the exact excess tends
        # to 2 log 2 as h -> 0 while L2 tends to 1
        for h in (0.1, 0.01, 1e-4):
            ex = abs(float(i24_excess(1.0, -1.0, h)))
            l2 = dominating_bound(1.0, -1.0, h)
            print(f"h={h}: |excess|={ex:.4f}, L2={l2.value:.4f}")
            assert l2.kind == "L2"
            assert ex > l2.value
        assert float(i24_excess(1.0, -1.0, 1e-8)) == pytest.approx(2 * math.log(2.0), abs=1e-6)

    @settings(max_examples=300)
    @given(nonzero, nonzero, st.floats(1e-4, 0.5))
    def test_corrected_bound_holds(self, t, s, h):
        if t == s:
            return
        ex = abs(float(i24_excess(t, s, h)))
        assert ex <= float(corrected_bound_values(t, s, h)) * (1 + 1e-9) + 1e-12

    def test_bound_type(self):
        b = dominating_bound(0.7, 0.3, 0.2)
        assert b.kind == "L1" and b.value >= 0.0
        with pytest.raises(DomainError):
            dominating_bound(0.7, 0.3, 0.6)


class TestUpperBound:
    def test_holds_on_square(self):
        rng = np.random.default_rng(5)
        worst = math.inf
        for _ in range(3000):
            t, s = rng.uniform(0.1, 1.0, 2)
            h = rng.choice([0.4, 0.2, 0.05, 0.01, 1e-3])
            worst = min(worst, kernel_kh_upper(t, s, h, 0.1) - kernel_kh(t, s, h).total)
        print(f"min slack of the log upper bound: {worst:.4f}")
        assert worst >= 0.0

    def test_domain(self):
        with pytest.raises(DomainError):
            kernel_kh_upper(0.05, 0.5, 0.1, 0.1)


class TestConeKernel:
    @pytest.mark.parametrize("x,eps", [(0.3, 0.1), (0.05, 0.2), (0.9, 0.5), (1.0, 0.3)])
    def test_against_area_integral(self, x, eps):
        assert cone_kernel(x, ConeKernelSpec(eps)) == pytest.approx(cone_oracle(x, eps), abs=1e-9)

    def test_log_regime(self):
        # for |x| >= eps the cone kernel is exactly log 1/|x|
        assert cone_kernel(0.4, ConeKernelSpec(0.1)) == pytest.approx(-math.log(0.4), abs=1e-15)

    def test_even_and_capped(self):
        spec = ConeKernelSpec(0.01)
        xs = np.linspace(1e-4, 1.0, 50)
        assert np.array_equal(cone_kernel(xs, spec), cone_kernel(-xs, spec))
        assert np.max(cone_kernel(xs, spec)) <= 1.0 - math.log(0.01)

    @pytest.mark.parametrize("eps", [0.0, 1.0])
    def test_spec_domain(self, eps):
        with pytest.raises(DomainError):
            ConeKernelSpec(eps)
