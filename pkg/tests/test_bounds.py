import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conformal_abstention.bounds import (
    BoundKind,
    BoundSpec,
    bernoulli_kl,
    binomial_cdf,
    hoeffding_bentkus_tail,
    ucb_bernoulli_kl,
    ucb_emp_bernstein,
    ucb_hoeffding,
    ucb_hoeffding_bentkus,
    upper_confidence_bound,
)
from oracles import exact_binomial_cdf, hb_ucb_at_zero, kl_mp, kl_ucb_at_zero

# Frozen from the oracles (mpmath, 50 digits).
KL_01_03 = 0.11632175658600448
KL_UCB_0_100 = 0.05160402962410400
HB_UCB_0_10 = 0.25886555089305228
EB_ZERO_100 = 0.04347164339864908
HOEFFDING_01_200 = 0.18654091913011427

means = st.integers(0, 100).map(lambda k: k / 100)


class TestBernoulliKL:
    def test_equal_arguments(self):
        assert bernoulli_kl(0.5, 0.5) == 0.0

    @pytest.mark.parametrize("p", [0.01, 0.3, 0.9])
    def test_zero_boundary(self, p):
        assert bernoulli_kl(0.0, p) == pytest.approx(-math.log(1 - p), rel=1e-14)

    def test_closed_form(self):
        assert bernoulli_kl(0.1, 0.3) == pytest.approx(KL_01_03, abs=1e-14)

    def test_infinite_at_boundary(self):
        assert bernoulli_kl(0.5, 0.0) == math.inf
        assert bernoulli_kl(0.5, 1.0) == math.inf
        assert bernoulli_kl(1.0, 1.0) == 0.0

    def test_domain(self):
        with pytest.raises(ValueError):
            bernoulli_kl(1.5, 0.5)

    @given(st.floats(0, 1), st.floats(0.001, 0.999))
    @settings(max_examples=200)
    def test_against_mpmath(self, t, p):
        assert bernoulli_kl(t, p) == pytest.approx(float(kl_mp(t, p)), rel=1e-9, abs=1e-12)


class TestBinomialCdf:
    def test_full_support(self):
        assert binomial_cdf(7, 7, 0.4) == 1.0

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.77])
    def test_zero_successes(self, p):
        assert binomial_cdf(0, 10, p) == pytest.approx((1 - p) ** 10, rel=1e-12)

    def test_worked_value(self):
        assert binomial_cdf(3, 10, 0.3) == pytest.approx(float(exact_binomial_cdf(3, 10, 0.3)), abs=1e-14)
        assert binomial_cdf(3, 10, 0.3) == pytest.approx(0.6496107184, abs=1e-10)

    def test_degenerate_p(self):
        assert binomial_cdf(0, 5, 0.0) == 1.0
        assert binomial_cdf(4, 5, 1.0) == 0.0

    def test_domain(self):
        with pytest.raises(ValueError):
            binomial_cdf(11, 10, 0.5)


class TestHoeffding:
    def test_closed_form(self):
        assert ucb_hoeffding(0.1, 200, 0.05) == pytest.approx(HOEFFDING_01_200, abs=1e-14)

    def test_delta_one_is_mean(self):
        assert ucb_hoeffding(0.3, 50, 1.0) == pytest.approx(0.3)

    @given(means, st.integers(1, 2000), st.floats(0.001, 0.5))
    def test_at_least_mean(self, mean, n, delta):
        assert ucb_hoeffding(mean, n, delta) >= mean


class TestEmpiricalBernstein:
    def test_all_zero(self):
        assert ucb_emp_bernstein(np.zeros(100), 0.05) == pytest.approx(EB_ZERO_100, abs=1e-14)

    def test_constant_losses(self):
        c, n, delta = 0.3, 50, 0.1
        expected = c + (7 / 3) * math.log(2 / delta) / (2 * (n - 1))
        assert ucb_emp_bernstein(np.full(n, c), delta) == pytest.approx(expected, rel=1e-12)

    def test_literature_constant_doubles_third_term(self):
        default = ucb_emp_bernstein(np.zeros(100), 0.05, constant="paper")
        lit = ucb_emp_bernstein(np.zeros(100), 0.05, constant="literature")
        assert lit == pytest.approx(2 * default)

    def test_needs_two(self):
        with pytest.raises(ValueError):
            ucb_emp_bernstein([0.0], 0.05)

    @given(st.lists(st.sampled_from([0.0, 1.0]), min_size=2, max_size=300), st.floats(0.01, 0.5))
    def test_at_least_mean(self, values, delta):
        assert ucb_emp_bernstein(values, delta) >= np.mean(values) - 1e-15


class TestBernoulliKLBound:
    def test_closed_form_at_zero(self):
        assert ucb_bernoulli_kl(0.0, 100, 0.05) == pytest.approx(KL_UCB_0_100, abs=1e-9)
        assert KL_UCB_0_100 == pytest.approx(float(kl_ucb_at_zero(100, 0.05)), abs=1e-15)

    def test_mean_one(self):
        assert ucb_bernoulli_kl(1.0, 30, 0.05) == 1.0

    def test_monotone_in_mean(self):
        assert ucb_bernoulli_kl(0.2, 100, 0.05) > ucb_bernoulli_kl(0.1, 100, 0.05)

    @given(means, st.integers(1, 1000), st.floats(0.001, 0.5))
    @settings(max_examples=150, deadline=None)
    def test_is_supremum_of_level_set(self, mean, n, delta):
        """The result lies on the level set boundary to the bisection tolerance."""
        ucb = ucb_bernoulli_kl(mean, n, delta)
        level = math.log(math.sqrt(n) / delta) / n
        assert ucb >= mean
        if ucb < 1.0:
            assert float(kl_mp(mean, ucb)) >= level - 1e-8
            assert float(kl_mp(mean, max(mean, ucb - 1e-9))) <= level + 1e-12


class TestHoeffdingBentkus:
    def test_closed_form_at_zero(self):
        assert ucb_hoeffding_bentkus(0.0, 10, 0.05) == pytest.approx(HB_UCB_0_10, abs=1e-9)
        assert HB_UCB_0_10 == pytest.approx(float(hb_ucb_at_zero(10, 0.05)), abs=1e-15)

    def test_large_delta(self):
        assert ucb_hoeffding_bentkus(0.3, 100, 0.999) <= 0.3 + 0.2

    @given(means, st.integers(1, 500), st.floats(0.001, 0.5))
    @settings(max_examples=150, deadline=None)
    def test_at_least_mean(self, mean, n, delta):
        assert ucb_hoeffding_bentkus(mean, n, delta) >= mean

    def test_tail_branches(self):
        # At mean 0 both branches are (1 - p)^n.
        assert hoeffding_bentkus_tail(0.0, 10, 0.2) == pytest.approx(0.8**10)

    def test_not_looser_than_kl_chernoff(self):
        # HB uses the minimum with the binomial tail, so it is at most the
        # pure Chernoff inversion at level ln(1/delta)/n.
        for mean in (0.0, 0.05, 0.2):
            n, delta = 200, 0.05
            level = math.log(1 / delta) / n
            hb = ucb_hoeffding_bentkus(mean, n, delta)
            if hb < 1:
                assert float(kl_mp(mean, hb)) <= level + 1e-8


class TestDispatcher:
    @pytest.mark.parametrize("kind", list(BoundKind))
    def test_scales_with_loss_range(self, kind):
        losses = np.array([0, 0, 1, 0, 0, 0, 1, 0, 0, 0] * 5, dtype=float)
        base = upper_confidence_bound(losses, BoundSpec(kind))
        scaled = upper_confidence_bound(2 * losses, BoundSpec(kind, loss_range=2.0))
        assert scaled == pytest.approx(2 * base, rel=1e-9)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            BoundSpec("hoeffding", delta=1.5)
        with pytest.raises(ValueError):
            BoundSpec("nope")
