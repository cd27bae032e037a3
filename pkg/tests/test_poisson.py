import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexsky import poisson
from flexsky.errors import DomainError, NumericalFailure
from flexsky.poisson import NumericsConfig, PoissonParams

# Frozen from 50-digit mpmath sums of lam**j * exp(-lam) / j!.
PMF_10_10 = 0.12511003572113329898
CDF_10_8 = 0.33281967875071890933
SURV_10_8 = 0.66718032124928109067
SURV_25_25 = 0.44707857997558519723
QUANTILE_10_HALF = 10


def mp_cdf(lam, k):
    with mpmath.workdps(40):
        lam = mpmath.mpf(lam)
        return mpmath.fsum(lam**j * mpmath.exp(-lam) / mpmath.factorial(j) for j in range(int(k) + 1))


class TestPmf:
    def test_closed_forms(self):
        assert poisson.pmf(1, 0) == pytest.approx(math.exp(-1), abs=1e-15)
        assert poisson.pmf(0, 0) == 1.0
        assert poisson.pmf(0, 3) == 0.0

    def test_derived(self):
        assert poisson.pmf(10, 10) == pytest.approx(PMF_10_10, rel=1e-13)

    def test_log_space_path(self):
        # both sides of the log-space switch agree with the exact value
        for lam, k in [(31.5, 30), (29.0, 31), (200.0, 180)]:
            expected = float(mpmath.mpf(lam) ** k * mpmath.exp(-lam) / mpmath.factorial(k))
            assert poisson.pmf(lam, k) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("bad", [-1, 1.5, True, "3"])
    def test_rejects_bad_counts(self, bad):
        with pytest.raises(DomainError):
            poisson.pmf(1.0, bad)

    @pytest.mark.parametrize("lam", [-0.5, math.inf, math.nan])
    def test_rejects_bad_rates(self, lam):
        with pytest.raises(DomainError):
            poisson.pmf(lam, 0)

    @pytest.mark.parametrize("lam", [0.3, 4.0, 37.0, 150.0])
    def test_partial_sums_approach_one(self, lam):
        total = 0.0
        for k in range(int(lam + 20 * math.sqrt(lam) + 30)):
            total += poisson.pmf(lam, k)
            assert total <= 1 + 1e-12
        assert total == pytest.approx(1.0, abs=1e-12)


class TestCdfSurvival:
    def test_trivial(self):
        assert poisson.cdf(0, 0) == 1.0
        assert poisson.cdf(0, 17.5) == 1.0
        assert poisson.cdf(1, 0) == pytest.approx(math.exp(-1), abs=1e-16)
        assert poisson.survival(1, 0) == pytest.approx(1 - math.exp(-1), abs=1e-16)
        assert poisson.survival(0, 0) == 0.0

    def test_derived(self):
        assert poisson.cdf(10, 8) == pytest.approx(CDF_10_8, abs=1e-15)
        assert poisson.survival(10, 8) == pytest.approx(SURV_10_8, abs=1e-15)
        assert poisson.survival(25, 25) == pytest.approx(SURV_25_25, abs=1e-15)

    def test_floor_semantics(self):
        assert poisson.cdf(10, 8.999) == poisson.cdf(10, 8)
        assert poisson.survival(10, 8.5) == poisson.survival(10, 8)

    def test_incomplete_gamma_identity(self):
        # P(X <= K) = Gamma(floor(K) + 1, lam) / floor(K)!
        for lam, k in [(10, 8), (3.5, 2.7), (60, 55), (100, 130)]:
            ref = mpmath.gammainc(math.floor(k) + 1, lam, mpmath.inf, regularized=True)
            assert poisson.cdf(lam, k) == pytest.approx(float(ref), abs=1e-12)

    def test_negative_threshold_is_an_error(self):
        with pytest.raises(DomainError):
            poisson.cdf(3, -0.1)
        with pytest.raises(DomainError):
            poisson.survival(3, -1)

    def test_small_tails_keep_relative_precision(self):
        for lam, k in [(5, 40), (50, 120), (100, 200)]:
            ref = 1 - mp_cdf(lam, k)
            assert poisson.survival(lam, k) == pytest.approx(float(ref), rel=1e-10)

    def test_anchor_switch_is_smooth(self):
        for m in (31, 150, 399):
            below = math.nextafter(float(m), 0.0)
            for k in range(m - 20, m + 20):
                assert poisson.survival(below, k) - poisson.survival(m, k) <= 2e-15

    def test_large_rate_does_not_underflow(self):
        assert poisson.cdf(2000, 2000) == pytest.approx(
            float(mpmath.gammainc(2001, 2000, mpmath.inf, regularized=True)), abs=1e-12
        )

    @settings(max_examples=200, deadline=None)
    @given(
        lam=st.floats(min_value=0, max_value=200, allow_nan=False),
        k1=st.integers(0, 400),
        k2=st.integers(0, 400),
    )
    def test_cdf_monotone_in_k(self, lam, k1, k2):
        lo, hi = sorted((k1, k2))
        assert poisson.cdf(lam, lo) <= poisson.cdf(lam, hi)

    @settings(max_examples=200, deadline=None)
    @given(
        a=st.floats(min_value=0.01, max_value=150),
        b=st.floats(min_value=0.01, max_value=150),
        k=st.floats(min_value=0, max_value=300),
    )
    def test_survival_monotone_in_rate(self, a, b, k):
        # nearly equal rates may straddle the mode anchor; allow rounding only
        lo, hi = sorted((a, b))
        assert poisson.survival(lo, k) <= poisson.survival(hi, k) + 1e-14

    @settings(max_examples=200, deadline=None)
    @given(lam=st.floats(min_value=0, max_value=300), k=st.floats(min_value=0, max_value=600))
    def test_complementary(self, lam, k):
        assert abs(poisson.cdf(lam, k) + poisson.survival(lam, k) - 1.0) <= 1e-12

    def test_increments_flatten_far_from_mean(self):
        lam = 20.0
        steps = [poisson.cdf(lam, k + 1) - poisson.cdf(lam, k) for k in range(200)]
        peak = max(range(200), key=lambda k: steps[k])
        # steps[k] is the mass at k + 1; the mode of Poisson(20) is 19 or 20
        assert peak + 1 in (19, 20)
        assert steps[-1] < 1e-15
        assert all(steps[k + 1] <= steps[k] for k in range(peak, 199))


class TestQuantile:
    def test_trivial(self):
        assert poisson.quantile(5, 0) == 0
        assert poisson.quantile(0, 0.99) == 0

    def test_derived(self):
        assert poisson.quantile(10, 0.5) == QUANTILE_10_HALF

    def test_is_smallest(self):
        for lam in [0.7, 6.0, 45.0]:
            for p in [0.01, 0.3, 0.5, 0.9, 0.999999]:
                k = poisson.quantile(lam, p)
                assert poisson.cdf(lam, k) >= p
                assert k == 0 or poisson.cdf(lam, k - 1) < p

    @pytest.mark.parametrize("lam", [0.0, 0.5, 3.0, 17.0, 64.0])
    def test_galois_direction(self, lam):
        for k in range(int(lam + 10 * math.sqrt(lam) + 5)):
            c = poisson.cdf(lam, k)
            if c < 1.0:
                assert poisson.quantile(lam, c) <= k

    @pytest.mark.parametrize("p", [-0.1, 1.0, 1.5, math.nan])
    def test_rejects_levels(self, p):
        with pytest.raises(DomainError):
            poisson.quantile(3, p)

    def test_clamp_exceeded(self):
        with pytest.raises(NumericalFailure):
            poisson.quantile(10, 0.999, NumericsConfig(quantile_upper_clamp=12))


class TestBandAndClamp:
    def test_band(self):
        assert poisson.two_sigma_band(25) == (15.0, 35.0)
        assert poisson.two_sigma_band(0) == (0.0, 0.0)
        lo, hi = poisson.two_sigma_band(10)
        assert lo == pytest.approx(10 - 2 * math.sqrt(10))
        assert hi == pytest.approx(10 + 2 * math.sqrt(10))
        assert poisson.two_sigma_band(4, NumericsConfig(band_multiplier=3)) == (0.0, 10.0)

    def test_clamped_survival(self):
        assert poisson.clamped_survival(25, 40) == 0.0
        assert poisson.clamped_survival(25, 10) == 1.0
        assert poisson.clamped_survival(25, 25) == poisson.survival(25, 25)
        assert poisson.clamped_survival(25, 25) == pytest.approx(SURV_25_25, abs=1e-15)

    def test_clamped_cdf_mirrors(self):
        assert poisson.clamped_cdf(25, 40) == 1.0
        assert poisson.clamped_cdf(25, 10) == 0.0
        assert poisson.clamped_cdf(25, 20) == poisson.cdf(25, 20)

    @pytest.mark.parametrize("lam", [25, 40, 50, 100, 400])
    def test_error_is_the_tail_outside_the_band(self, lam):
        lo, hi = poisson.two_sigma_band(lam)
        for k in range(int(hi) + 1, int(hi) + 40):
            err = poisson.clamped_survival(lam, k) - poisson.survival(lam, k)
            assert abs(err) == poisson.survival(lam, k)
        bound = poisson.clamp_error_bound(lam)
        assert bound < 0.05
        ks = [x / 4 for x in range(int(4 * (lam + 10 * math.sqrt(lam))))]
        worst = max(abs(poisson.clamped_survival(lam, k) - poisson.survival(lam, k)) for k in ks)
        assert worst <= bound

    def test_params_moments(self):
        p = PoissonParams(9)
        assert (p.mean, p.variance, p.std) == (9.0, 9.0, 3.0)

    def test_config_validation(self):
        with pytest.raises(DomainError):
            NumericsConfig(band_multiplier=0)
        with pytest.raises(DomainError):
            poisson.quantile(50, 0.5, NumericsConfig(quantile_upper_clamp=10))
