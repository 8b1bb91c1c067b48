"""
Test tail probabilities.
"""

import math
from fractions import Fraction

import pytest

from stat_dist import (
    DomainError,
    binom_sf,
    chebyshev_p,
    chisq1_sf,
    normal_sf,
    wilks_mixture_sf,
)


def _binom_sf_exact(n, p, k):
    """Forward sum in exact rationals."""
    p = Fraction(p)
    total = sum(math.comb(n, j) * p**j * (1 - p) ** (n - j) for j in range(k, n + 1))
    return float(total)


class TestNormal:
    """Test the normal upper tail."""

    def test_delft_naive_p(self):
        """z = 2.07284 has upper tail 0.0190936."""
        assert normal_sf(2.07284).p == pytest.approx(0.0190936, rel=1e-5)

    def test_zero(self):
        tail = normal_sf(0.0)
        assert tail.p == 0.5
        assert tail.log_p == pytest.approx(math.log(0.5))

    def test_two_tails_sum_to_one(self):
        """P(Z >= z) + P(Z >= -z) = 1 across |z| <= 8."""
        for z in [i / 4 for i in range(-32, 33)]:
            assert normal_sf(z).p + normal_sf(-z).p == pytest.approx(1.0, abs=1e-15)

    def test_far_tail_keeps_log(self):
        """Beyond double underflow the log tail is still finite and near -z^2/2."""
        tail = normal_sf(40.0)
        assert tail.p == 0.0
        assert math.isfinite(tail.log_p)
        assert tail.log_p == pytest.approx(-800 - math.log(40 * math.sqrt(2 * math.pi)), rel=1e-3)

    def test_infinite_z_rejected(self):
        with pytest.raises(DomainError):
            normal_sf(math.inf)


class TestChiSquare:
    """Test chi-square(1) and the boundary mixture."""

    def test_chisq1_is_twice_normal_tail(self):
        """P(chi2_1 >= 4) = 2 P(Z >= 2)."""
        assert chisq1_sf(4.0).p == pytest.approx(2 * normal_sf(2.0).p, rel=1e-12)

    def test_chisq1_at_zero(self):
        assert chisq1_sf(0.0).p == pytest.approx(1.0)

    def test_mixture_is_half(self):
        """The mixture tail is half the chi-square(1) tail."""
        for w in [0.5, 2.0, 9.0, 57.19689]:
            assert wilks_mixture_sf(w).p == pytest.approx(chisq1_sf(w).p / 2, rel=1e-12)

    def test_mixture_at_zero_is_one(self):
        assert wilks_mixture_sf(0.0).p == 1.0

    def test_negative_statistic_rejected(self):
        with pytest.raises(DomainError):
            wilks_mixture_sf(-0.1)
        with pytest.raises(DomainError):
            chisq1_sf(-1.0)


class TestBinomial:
    """Test the binomial upper tail."""

    def test_zhang_bell_game(self):
        """1357 or more wins in 1649 trials at rate 3/4: tail 8.04e-13."""
        tail = binom_sf(1649, 0.75, 1357)
        assert tail.p == pytest.approx(_binom_sf_exact(1649, 0.75, 1357), rel=1e-10)
        assert tail.p == pytest.approx(8.04e-13, rel=1e-2)

    def test_zhang_one_more_win(self):
        """The quoted 5e-13 is the tail from one win above the observed count."""
        tail = binom_sf(1649, 0.75, 1358)
        assert tail.p == pytest.approx(_binom_sf_exact(1649, 0.75, 1358), rel=1e-10)
        assert float(f"{tail.p:.1g}") == 5e-13

    def test_billions_of_trials(self):
        """A Vienna-sized sample is summed over a window, agreeing with the normal tail."""
        n = 3_502_784_150
        sd = math.sqrt(n * 0.75 * 0.25)
        k = int(0.75 * n + 3 * sd)
        tail = binom_sf(n, 0.75, k)
        assert tail.p == pytest.approx(normal_sf((k - 0.5 - 0.75 * n) / sd).p, rel=1e-3)

    def test_billions_of_trials_below_mean(self):
        n = 3_502_784_150
        sd = math.sqrt(n * 0.75 * 0.25)
        k = int(0.75 * n - 2 * sd)
        tail = binom_sf(n, 0.75, k)
        assert tail.p == pytest.approx(normal_sf((k - 0.5 - 0.75 * n) / sd).p, rel=1e-3)

    @pytest.mark.parametrize("n,k", [(10, 8), (40, 31), (40, 25), (245, 196), (300, 200), (7, 0), (7, 7), (500, 450)])
    def test_against_exact_sum(self, n, k):
        """Log-domain sum agrees with the exact forward sum."""
        assert binom_sf(n, 0.75, k).p == pytest.approx(_binom_sf_exact(n, 0.75, k), rel=1e-10)

    def test_edges(self):
        """k <= 0 is certain, k > n impossible."""
        assert binom_sf(10, 0.75, 0).p == 1.0
        assert binom_sf(10, 0.75, -3).p == 1.0
        tail = binom_sf(10, 0.75, 11)
        assert tail.p == 0.0
        assert tail.log_p == -math.inf

    def test_monotone_in_k(self):
        tails = [binom_sf(100, 0.75, k).p for k in range(60, 101)]
        assert all(a > b for a, b in zip(tails, tails[1:]))

    def test_bad_arguments(self):
        with pytest.raises(DomainError):
            binom_sf(10, 1.0, 5)
        with pytest.raises(DomainError):
            binom_sf(10, 0.75, 20)


class TestChebyshev:
    """Test the distribution-free bound."""

    def test_seventeen_and_a_half(self):
        """z = 17.5 gives 1/306.25, printed 0.0033."""
        tail = chebyshev_p(17.5)
        assert tail.p == pytest.approx(1 / 306.25)
        assert f"{tail.p:.2g}" == "0.0033"

    def test_capped_at_one(self):
        assert chebyshev_p(0.5).p == 1.0

    def test_non_positive_rejected(self):
        with pytest.raises(DomainError):
            chebyshev_p(0.0)
