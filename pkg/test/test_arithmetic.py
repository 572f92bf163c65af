from fractions import Fraction

import numpy as np
import pytest
from mpmath import mp, mpf
from pydantic import ValidationError

from app.helpers.errors import InsufficientDepthError, PrecisionExhaustedError
from app.modules.arithmetic import (
    DiophantineKind,
    Frequency,
    FrequencyLiteral,
    beta_exponent,
    continued_fraction,
    sdc_check,
    theta_membership,
)

GOLDEN_50 = "0.61803398874989484820458683436563811772030917980576"


class TestContinuedFraction:
    """Test partial quotient extraction."""

    def test_golden_mean_quotients(self, golden):
        """Test golden mean has all-ones quotients and Fibonacci convergents."""
        assert golden.quotients == (1,) * 40
        assert golden.convergents[:5] == ((1, 1), (1, 2), (2, 3), (3, 5), (5, 8))
        assert golden.rational_detected is False
        assert float(golden) == pytest.approx((5 ** 0.5 - 1) / 2, abs=1e-15)

    def test_rational_quarter(self):
        """Test 1/4 terminates after a single quotient."""
        alpha = continued_fraction(Fraction(1, 4), 10)
        assert alpha.quotients == (4,)
        assert alpha.rational_detected is True

    def test_rational_three_sevenths(self):
        """Test 3/7 = [0; 2, 3]."""
        alpha = continued_fraction(Fraction(3, 7), 10)
        assert alpha.quotients == (2, 3)
        assert alpha.rational_detected is True

    def test_short_literal_strict_raises(self):
        """Test a three-digit literal cannot certify ten quotients."""
        with pytest.raises(PrecisionExhaustedError):
            Frequency.from_decimal("0.618", depth=10)

    def test_short_literal_non_strict_truncates(self, caplog):
        """Test non-strict expansion stops where the digits run out."""
        alpha = Frequency.from_decimal("0.618")
        assert len(alpha.quotients) >= 3
        assert alpha.quotients[:3] == (1, 1, 1)
        assert "significant digits" in caplog.text

    def test_long_golden_literal(self):
        """Test a 50-digit golden literal certifies 40 ones."""
        alpha = Frequency.from_decimal(GOLDEN_50, depth=40)
        assert alpha.quotients == (1,) * 40
        assert alpha.rational_detected is False

    def test_silver_mean(self):
        """Test sqrt(2) - 1 = [0; 2, 2, 2, ...]."""
        with mp.workdps(60):
            x = mp.sqrt(2) - 1
        assert continued_fraction(x, 4).quotients == (2, 2, 2, 2)

    def test_out_of_range(self):
        """Test x outside (0, 1) is rejected."""
        with pytest.raises(ValueError):
            continued_fraction(1.5, 5)
        with pytest.raises(ValueError):
            continued_fraction(0.5, 0)

    def test_from_quotients_finite(self):
        """Test tail='none' reproduces the rational value."""
        alpha = Frequency.from_quotients([2, 3], tail="none")
        assert float(alpha) == pytest.approx(3 / 7, abs=1e-15)
        assert alpha.rational_detected is True

    def test_from_quotients_rejects_nonpositive(self):
        """Test quotients must be positive."""
        with pytest.raises(ValueError):
            Frequency.from_quotients([1, 0, 2])


class TestOrbit:
    """Test fixed-point orbit evaluation."""

    def test_orbit_matches_high_precision(self, golden):
        """Test orbit agrees with mpmath fractional parts."""
        orbit = golden.orbit(10, start=5)
        with mp.workdps(60):
            expected = [float(mp.frac((5 + i) * golden.value)) for i in range(10)]
        np.testing.assert_allclose(orbit, expected, atol=1e-15)

    def test_orbit_far_out(self, golden):
        """Test the orbit at k ~ 10^7 does not drift."""
        k = 10_000_000
        with mp.workdps(60):
            expected = float(mp.frac(k * golden.value))
        assert golden.orbit(1, start=k)[0] == pytest.approx(expected, abs=1e-15)

    def test_orbit_read_only(self, golden):
        """Test cached orbits cannot be mutated."""
        orbit = golden.orbit(8)
        with pytest.raises(ValueError):
            orbit[0] = 0.5

    def test_dist_to_integer(self, golden):
        """Test ‖kα‖ at the first denominators."""
        dist = golden.dist_to_integer(np.array([1, 2, 3]))
        alpha = float(golden)
        expected = [1 - alpha, 2 * alpha - 1, 2 - 3 * alpha]
        np.testing.assert_allclose(dist, expected, atol=1e-15)


class TestSdcCheck:
    """Test the strong Diophantine scan."""

    def test_golden_is_sdc(self, golden):
        """Test golden mean satisfies SDC with kappa 0.2, tau 1.1 up to 10^5."""
        report = sdc_check(golden, kappa=0.2, tau=1.1, k_max=100_000)
        assert report.kind == DiophantineKind.SDC
        assert report.best_kappa >= 0.2
        assert report.worst_k == 1
        assert report.worst_margin == pytest.approx(1 - float(golden), abs=1e-12)

    def test_margin_monotone_in_range(self, golden):
        """Test the worst margin can only shrink as k_max grows."""
        small = sdc_check(golden, 0.2, 1.1, 1_000)
        large = sdc_check(golden, 0.2, 1.1, 100_000)
        assert large.worst_margin <= small.worst_margin

    def test_large_kappa_fails(self, golden):
        """Test an unattainable kappa reports not-SDC."""
        report = sdc_check(golden, kappa=0.5, tau=1.1, k_max=1_000)
        assert report.kind == DiophantineKind.NOT_SDC

    def test_single_term_scan(self, golden):
        """Test k_max = 1 only checks dist(alpha, Z) = 1 - alpha."""
        report = sdc_check(golden, kappa=0.3, tau=2, k_max=1)
        assert report.kind == DiophantineKind.SDC
        assert report.worst_k == 1

    def test_huge_quotient_fails_at_first_denominator(self):
        """Test a 10^6 partial quotient puts alpha within 10^-6 of 1."""
        alpha = Frequency.from_quotients([1, 10 ** 6, 1, 1])
        report = sdc_check(alpha, kappa=0.2, tau=1.1, k_max=10)
        assert report.kind == DiophantineKind.NOT_SDC
        assert report.worst_k == 1
        assert report.worst_margin < 1e-5

    def test_rational_frequency(self):
        """Test a rational frequency is reported as such."""
        alpha = Frequency.from_quotients([2, 3], tail="none")
        report = sdc_check(alpha, 0.2, 1.1, 100)
        assert report.kind == DiophantineKind.RATIONAL
        assert report.worst_k == 7

    @pytest.mark.parametrize("quotients", [[1] * 30, [1, 10 ** 6, 1, 1], [2, 1, 50, 3, 1, 7, 1, 1, 1, 1]])
    def test_monotone_in_kappa_and_range(self, quotients):
        """Test lowering kappa never loses SDC and raising k_max never gains it."""
        alpha = Frequency.from_quotients(quotients)
        kinds = [sdc_check(alpha, kappa, 1.1, 1_000).kind for kappa in [0.5, 0.3, 0.2, 0.1, 0.01, 1e-4]]
        first = kinds.index(DiophantineKind.SDC) if DiophantineKind.SDC in kinds else len(kinds)
        assert all(kind == DiophantineKind.SDC for kind in kinds[first:])

        kinds = [sdc_check(alpha, 0.05, 1.1, k_max).kind for k_max in [1, 10, 100, 1_000, 10_000]]
        last = max((i for i, kind in enumerate(kinds) if kind == DiophantineKind.SDC), default=-1)
        assert all(kind == DiophantineKind.SDC for kind in kinds[:last + 1])

    def test_invalid_parameters(self, golden):
        """Test parameter validation."""
        with pytest.raises(ValueError):
            sdc_check(golden, kappa=0.2, tau=1.0, k_max=10)
        with pytest.raises(ValueError):
            sdc_check(golden, kappa=0.0, tau=1.1, k_max=10)


class TestBetaExponent:
    """Test the Liouville exponent estimate."""

    def test_golden_beta_zero(self, golden):
        """Test golden mean has beta ≈ 0."""
        report = beta_exponent(golden)
        assert report.tail < 0.01
        assert report.depth == 40

    def test_insufficient_depth(self):
        """Test two quotients are not enough."""
        with pytest.raises(InsufficientDepthError):
            beta_exponent(Frequency.from_quotients([1, 1]))

    def test_rational_raises(self):
        """Test beta is undefined for rationals."""
        with pytest.raises(InsufficientDepthError):
            beta_exponent(Frequency.from_quotients([2, 3], tail="none"))

    def test_large_quotient(self):
        """Test a huge partial quotient dominates the estimate."""
        report = beta_exponent(Frequency.from_quotients([1, 10 ** 6, 1, 1]))
        assert report.overall > 1.0
        assert report.argmax_n == 1

    def test_late_large_quotient(self):
        """Test a 10^6 quotient at q = 2 gives beta >= ln(10^6)/2."""
        report = beta_exponent(Frequency.from_quotients([1, 1, 10 ** 6, 1, 1]))
        assert report.overall >= np.log(10 ** 6) / 2
        assert report.argmax_n == 2


class TestThetaMembership:
    """Test the phase resonance check."""

    def test_resonant_phase(self, golden):
        """Test θ = α/2 fails at k = -1."""
        report = theta_membership(golden.value / 2, golden, gamma=0.01, tau=2, k_max=100)
        assert report.member is False
        assert report.witness_k == -1
        assert report.witness_norm == pytest.approx(0.0, abs=1e-15)

    def test_large_gamma_fails_at_zero(self, golden):
        """Test γ above ‖2θ‖ fails at k = 0."""
        report = theta_membership(0.25, golden, gamma=0.6, tau=2, k_max=10)
        assert report.member is False
        assert report.witness_k == 0

    def test_generic_member(self, golden):
        """Test a generic phase is a member."""
        report = theta_membership(0.1, golden, gamma=0.01, tau=2, k_max=100)
        assert report.member is True
        assert report.witness_norm >= report.witness_bound

    @pytest.mark.parametrize("theta", np.linspace(0.0, 0.5, 21).tolist())
    def test_monotone_in_gamma_and_range(self, golden, theta):
        """Test larger γ or k_max never turns a non-member into a member."""
        by_gamma = [theta_membership(theta, golden, gamma, 2, 200).member for gamma in [1e-4, 1e-3, 0.01, 0.05, 0.2, 0.6]]
        assert by_gamma == sorted(by_gamma, reverse=True)

        by_range = [theta_membership(theta, golden, 0.01, 2, k_max).member for k_max in [0, 5, 50, 500, 2_000]]
        assert by_range == sorted(by_range, reverse=True)

    def test_matches_exhaustive_scan(self, golden):
        """Test θ = 1/4, γ = 0.05, τ = 2 against a direct loop over k."""
        alpha = float(golden)
        expected = all(
            abs(0.5 + k * alpha - round(0.5 + k * alpha)) >= 0.05 / (abs(k) + 1) ** 2
            for k in range(-1_000, 1_001)
        )
        assert theta_membership(0.25, golden, gamma=0.05, tau=2, k_max=1_000).member is expected

    def test_invalid_gamma(self, golden):
        """Test gamma must be positive."""
        with pytest.raises(ValueError):
            theta_membership(0.1, golden, gamma=0.0, tau=2, k_max=10)


class TestFrequencyLiteral:
    """Test config-level frequency literals."""

    def test_quotients_literal(self):
        """Test quotients literal yields golden tail completion."""
        alpha = FrequencyLiteral(quotients=[1] * 20).to_frequency()
        assert alpha.quotients == (1,) * 20
        assert float(alpha) == pytest.approx((5 ** 0.5 - 1) / 2, abs=1e-15)

    def test_decimal_literal(self):
        """Test decimal literal honours depth."""
        alpha = FrequencyLiteral(decimal=GOLDEN_50, depth=30).to_frequency()
        assert len(alpha.quotients) == 30

    @pytest.mark.parametrize("payload", [
        {},
        {"decimal": "0.5", "quotients": [2]},
        {"quotients": [1, 0]},
        {"decimal": "0.6", "extra": 1},
    ])
    def test_invalid_literals(self, payload):
        """Test malformed literals are rejected."""
        with pytest.raises(ValidationError):
            FrequencyLiteral(**payload)

    def test_to_literal(self, golden):
        """Test the canonical literal carries 40 digits."""
        literal = golden.to_literal()
        assert literal["decimal"].startswith("0.6180339887")
        assert mpf(literal["decimal"]) > 0
