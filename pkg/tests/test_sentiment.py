import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sentilevy.model import ScoredMessage, Stream
from sentilevy.sentiment import (DegenerateMarketError, MarketDay, WeightMode, WeightPolicy,
                                 aggregate_day, beta_market, jensen_alpha, weight_series, weights)

JENSEN = WeightPolicy(mode=WeightMode.JENSEN)

message = st.builds(lambda c, n: ScoredMessage(0, Stream.IDIO, c, n),
                    st.floats(-1, 1), st.floats(0, 1))


def market(ra, rm, rf=0.0):
    return [MarketDay(i, float(a), float(b), rf) for i, (a, b) in enumerate(zip(ra, rm))]


class TestAggregateDay:
    def test_hand_example(self):
        msgs = [ScoredMessage(0, Stream.IDIO, 0.5, 0.2), ScoredMessage(0, Stream.IDIO, -1.0, 1.0)]
        s, e = aggregate_day(msgs)
        assert s == pytest.approx(0.4, abs=1e-15)
        assert e == pytest.approx(0.6, abs=1e-15)

    def test_empty_day(self):
        assert aggregate_day([]) == (0.0, 1.0)

    def test_matches_independent_sum(self):
        rng = np.random.default_rng(11)
        comp = rng.uniform(-1, 1, 1000)
        neut = rng.uniform(0, 1, 1000)
        msgs = [ScoredMessage(0, Stream.MACRO, c, n) for c, n in zip(comp, neut)]
        s, e = aggregate_day(msgs)
        assert s == pytest.approx(math.fsum((1 - neut) * comp), abs=1e-12)
        assert e == pytest.approx(math.fsum(neut) / 1000, abs=1e-12)

    @given(st.lists(message, max_size=30), st.randoms())
    def test_permutation_invariant(self, msgs, rnd):
        shuffled = list(msgs)
        rnd.shuffle(shuffled)
        a, b = aggregate_day(msgs), aggregate_day(shuffled)
        assert a == pytest.approx(b, abs=1e-12)

    @given(st.lists(message, min_size=1, max_size=30))
    def test_noise_is_a_mean(self, msgs):
        _, e = aggregate_day(msgs)
        assert 0.0 <= e <= 1.0 + 1e-15


class TestBeta:
    def test_identical_series(self):
        rm = np.random.default_rng(0).normal(0, 0.01, 30)
        assert beta_market(market(rm, rm), 30) == pytest.approx(1.0, abs=1e-12)

    def test_doubled_series(self):
        rm = np.random.default_rng(1).normal(0, 0.01, 30)
        assert beta_market(market(2 * rm, rm), 30) == pytest.approx(2.0, abs=1e-12)

    def test_two_pass_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            ra, rm = rng.normal(0, 0.02, 90), rng.normal(0, 0.01, 90)
            hist = market(ra, rm)
            a, m = ra[-60:], rm[-60:]
            ma, mm = sum(a) / 60, sum(m) / 60
            cov = sum((x - ma) * (y - mm) for x, y in zip(a, m)) / 59
            var = sum((y - mm) ** 2 for y in m) / 59
            assert beta_market(hist, 60) == pytest.approx(cov / var, abs=1e-10)

    def test_uses_trailing_window_only(self):
        rng = np.random.default_rng(3)
        ra, rm = rng.normal(size=40), rng.normal(size=40)
        full = beta_market(market(ra, rm), 20)
        ra[:20] = 99.0
        assert beta_market(market(ra, rm), 20) == full

    def test_invariances(self):
        rng = np.random.default_rng(4)
        ra, rm = rng.normal(0, 0.02, 60), rng.normal(0, 0.01, 60)
        b = beta_market(market(ra, rm), 60)
        assert beta_market(market(ra + 0.3, rm + 0.3), 60) == pytest.approx(b, rel=1e-9)
        assert beta_market(market(-3.5 * ra, rm), 60) == pytest.approx(-3.5 * b, rel=1e-9)

    def test_degenerate_market(self):
        with pytest.raises(DegenerateMarketError):
            beta_market(market(np.arange(10.0), np.full(10, 0.01)), 10)

    @pytest.mark.parametrize("n,window", [(5, 10), (10, 1)])
    def test_preconditions(self, n, window):
        with pytest.raises(ValueError):
            beta_market(market(np.zeros(n), np.zeros(n)), window)


class TestJensenAlpha:
    def test_tracks_market(self):
        assert jensen_alpha(MarketDay(0, 0.013, 0.013, 0.0), 1.0) == 0.0

    def test_zero_beta(self):
        assert jensen_alpha(MarketDay(0, 0.02, 0.7, 0.01), 0.0) == pytest.approx(0.01, abs=1e-15)

    @given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-0.01, 0.01), st.floats(-3, 3))
    def test_formula(self, ri, rm, rf, beta):
        assert jensen_alpha(MarketDay(0, ri, rm, rf), beta) == ri - (rf + beta * (rm - rf))


class TestWeights:
    def test_half_ratio(self):
        # alpha = r/2 with beta = 0.5, r_f = 0, r_M = r
        assert weights(MarketDay(0, 0.02, 0.02), 0.5, JENSEN) == pytest.approx((0.5, 0.5))

    def test_clamped_above(self):
        # alpha = 2r: r = 0.01, r_M = -0.01, beta = 1
        assert weights(MarketDay(0, 0.01, -0.01), 1.0, JENSEN) == (1.0, 0.0)

    def test_degenerate_return(self):
        assert weights(MarketDay(0, 0.0, 0.05), 1.0, JENSEN) == (0.5, 0.5)

    def test_fixed_policy(self):
        assert weights(MarketDay(0, 0.3, 0.1), 2.0, WeightPolicy(c_idio=0.25)) == (0.25, 0.75)

    @given(st.floats(-0.1, 0.1), st.floats(-0.1, 0.1), st.floats(-0.001, 0.001),
           st.floats(-3, 3), st.sampled_from([JENSEN, WeightPolicy(c_idio=0.3)]))
    def test_pair_sums_to_one(self, ri, rm, rf, beta, policy):
        c_i, c_m = weights(MarketDay(0, ri, rm, rf), beta, policy)
        assert c_i + c_m == 1.0
        assert 0.0 <= c_i <= 1.0


class TestWeightSeries:
    def test_fixed(self):
        c, clamps = weight_series(None, 5, WeightPolicy(c_idio=0.8), 60)
        assert np.all(c == 0.8) and clamps == 0

    def test_uses_previous_day_only(self):
        rng = np.random.default_rng(5)
        ra, rm = rng.normal(0, 0.02, 30), rng.normal(0, 0.01, 30)
        c1, _ = weight_series(market(ra, rm), 30, JENSEN, 10)
        ra[20], rm[20] = 0.5, -0.4
        c2, _ = weight_series(market(ra, rm), 30, JENSEN, 10)
        assert np.array_equal(c1[:21], c2[:21])
        assert not np.array_equal(c1[21:], c2[21:])

    def test_matches_pointwise_weights(self):
        rng = np.random.default_rng(6)
        ra, rm = rng.normal(0, 0.02, 80), rng.normal(0, 0.01, 80)
        hist = market(ra, rm)
        c, clamps = weight_series(hist, 80, JENSEN, 60)
        assert c[0] == 0.5
        for t in (61, 70, 79):
            beta = beta_market(hist[:t], 60)
            assert c[t] == weights(hist[t - 1], beta, JENSEN)[0]
        assert 0 <= clamps < 80

    def test_short_market_rejected(self):
        with pytest.raises(ValueError):
            weight_series(market([0.1], [0.1]), 3, JENSEN, 60)
