"""Tests for the five reward channels and the aggregator."""

import math

import numpy as np
import pytest

from cryptojudge.config import Asset, RewardConfig
from cryptojudge.errors import DegenerateError, InvariantError
from cryptojudge.market_data import Candle
from cryptojudge.models import AggregatorParams
from cryptojudge.rewards import (
    CHANNELS,
    RewardVector,
    aggregate,
    basket_candle,
    compute_reward_vector,
    ew_weights,
    expected_slippage_bps,
    init_aggregator,
    ohlc_path,
    reward_drawdown,
    reward_liquidity,
    reward_return,
    reward_sentiment,
    reward_sharpe,
    squash,
)
from cryptojudge.seeding import rng_for

from .conftest import D1, D2, D3


class TestSquash:
    """Test the tanh-shaped normaliser."""

    def test_zero(self):
        assert squash(0.0, 0.02) == 0.0

    def test_odd(self):
        """squash(-x) == -squash(x)."""
        for x in (-3.0, -0.01, 0.5, 7.0):
            assert squash(x, 0.5) == -squash(-x, 0.5)

    def test_saturates(self):
        """Ten scales out the squash is within 1e-8 of one."""
        assert squash(10 * 0.05, 0.05) == pytest.approx(1.0, abs=1e-8)

    def test_rejects_bad_scale(self):
        with pytest.raises(InvariantError):
            squash(1.0, 0.0)


class TestRewardReturn:
    """Test the net-of-fee return channel."""

    def test_flat_position_is_zero(self):
        assert reward_return(0.0, 100.0, 120.0, 10.0) == 0.0

    def test_long_gain_after_fee(self):
        """alpha = 1 on 100 -> 101 with 10 bps nets 0.009 before squashing."""
        value = reward_return(1.0, 100.0, 101.0, 10.0)
        assert value == pytest.approx(math.tanh(0.009 / 0.02))
        assert value == pytest.approx(0.42190, abs=1e-5)

    def test_fees_penalise_flat_prices(self):
        """A full short on an unchanged price only pays the fee."""
        assert reward_return(-1.0, 100.0, 100.0, 10.0) < 0

    def test_monotone_in_close(self):
        """Longs rise and shorts fall with the close."""
        closes = [95.0, 99.0, 100.0, 101.0, 104.0]
        longs = [reward_return(0.5, 100.0, c, 10.0) for c in closes]
        shorts = [reward_return(-0.5, 100.0, c, 10.0) for c in closes]
        assert longs == sorted(longs)
        assert shorts == sorted(shorts, reverse=True)

    def test_rejects_non_positive_price(self):
        with pytest.raises(InvariantError):
            reward_return(1.0, 0.0, 1.0, 10.0)


class TestRewardSharpe:
    """Test the incremental EW Sharpe channel."""

    def test_weights_normalised_newest_heaviest(self):
        """Weights sum to one and grow towards today."""
        w = ew_weights(5, 10)
        assert w.sum() == pytest.approx(1.0)
        assert np.all(np.diff(w) > 0)

    def test_spike_today_is_positive(self):
        """A jump on the newest day lifts the weighted Sharpe above zero."""
        assert reward_sharpe([0.01, 0.01, 0.05], 10) > 0

    def test_loss_today_is_negative(self):
        assert reward_sharpe([0.01, 0.02, 0.015, -0.04], 10) < 0

    def test_constant_window_is_degenerate(self):
        with pytest.raises(DegenerateError):
            reward_sharpe([0.01, 0.01, 0.01], 10)

    def test_window_too_short(self):
        with pytest.raises(InvariantError):
            reward_sharpe([0.01], 10)


class TestRewardDrawdown:
    """Test the OHLC-path drawdown channel."""

    def test_rising_path(self):
        assert reward_drawdown([1.0, 2.0, 3.0], 1.0) == 0.0

    def test_single_drop(self):
        assert reward_drawdown([100.0, 80.0], 1.0) == pytest.approx(-math.tanh(0.2 / 0.05))

    def test_no_position(self):
        assert reward_drawdown([100.0, 50.0], 0.0) == 0.0

    def test_never_positive(self):
        """200 random paths never give a positive drawdown reward."""
        rng = np.random.default_rng(0)
        for _ in range(200):
            path = list(rng.uniform(1, 100, size=4))
            assert reward_drawdown(path, float(rng.uniform(-1, 1))) <= 0.0

    def test_empty_path(self):
        with pytest.raises(InvariantError):
            reward_drawdown([], 1.0)

    def test_ohlc_path_orders(self):
        """Longs walk open, high, low, close; shorts walk reciprocal prices."""
        candle = Candle(asset=Asset.BTC, date=D1, open=100, high=110, low=90, close=105, volume=1, market_cap=1)
        assert ohlc_path(candle, 1.0) == [100, 110, 90, 105]
        short = ohlc_path(candle, -1.0)
        assert short == pytest.approx([1 / 100, 1 / 90, 1 / 110, 1 / 105])


class TestRewardLiquidity:
    """Test the slippage-threshold channel."""

    def test_no_order_small_gas(self):
        assert reward_liquidity(0.0, 1e9, 20.0, 5.0) == pytest.approx(math.tanh((5.0 - 0.02) / 10.0))

    def test_at_threshold(self):
        """Expected slippage equal to the threshold scores zero."""
        notional = 5.0 / (0.1 * 10_000) * 1e8
        assert expected_slippage_bps(notional, 1e8, 0.0) == pytest.approx(5.0)
        assert reward_liquidity(notional, 1e8, 0.0, 5.0) == pytest.approx(0.0, abs=1e-12)

    def test_one_percent_participation(self):
        """1% of volume at impact 0.1 costs 10 bps, 5 over the threshold."""
        value = reward_liquidity(1e6, 1e8, 0.0, 5.0)
        assert value == pytest.approx(math.tanh(-0.5))
        assert value < 0

    def test_zero_volume(self):
        with pytest.raises(InvariantError):
            reward_liquidity(1.0, 0.0, 0.0, 5.0)


class TestRewardSentiment:
    """Test cosine similarity."""

    def test_same_direction(self):
        assert reward_sentiment([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0)

    def test_opposite(self):
        assert reward_sentiment([1.0, -2.0], [-1.0, 2.0]) == pytest.approx(-1.0)

    def test_orthogonal(self):
        assert reward_sentiment([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_scale_invariant(self):
        """Cosine similarity ignores vector length."""
        u, v = [0.3, -1.2, 2.0], [1.0, 0.5, -0.7]
        scaled = reward_sentiment([4 * x for x in u], [0.1 * x for x in v])
        assert scaled == pytest.approx(reward_sentiment(u, v))

    def test_zero_vector(self):
        with pytest.raises(InvariantError):
            reward_sentiment([0.0, 0.0], [1.0, 0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(InvariantError):
            reward_sentiment([1.0, 0.0], [1.0, 0.0, 0.0])


class TestAggregate:
    """Test f_agg."""

    def test_zero_params(self):
        """All-zero aggregator weights output zero."""
        params = AggregatorParams.zeros(len(CHANNELS), 8)
        r = RewardVector(r_return=0.5, r_sharpe=-0.2, r_dd=-0.9, r_liq=0.1, r_sent=1.0)
        assert aggregate(params, r) == 0.0

    def test_hand_trace(self):
        """One active path: 2 * tanh(r_return) + 0.5."""
        params = AggregatorParams(
            np.array([[1.0, 0.0, 0.0, 0.0, 0.0]]), np.zeros(1), np.array([2.0]), np.array([0.5])
        )
        r = RewardVector(r_return=0.3, r_sharpe=0.9, r_dd=-0.4, r_liq=0.2, r_sent=-0.6)
        assert aggregate(params, r) == pytest.approx(2 * math.tanh(0.3) + 0.5)

    def test_finite_over_cube(self):
        """10,000 inputs from the unit cube give finite outputs."""
        params = init_aggregator(rng_for(0, "test.aggregate"), hidden=8)
        inputs = np.random.default_rng(1).uniform(-1, 1, size=(10_000, 5))
        assert np.all(np.isfinite(params.forward(inputs)))

    def test_rejects_non_finite_params(self):
        params = AggregatorParams.zeros(5, 2)
        bad = params.with_flat(np.full(params.size, np.nan))
        with pytest.raises(InvariantError):
            aggregate(bad, RewardVector.from_array([0, 0, 0, 0, 0]))


class TestRewardVector:
    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            RewardVector(r_return=1.5, r_sharpe=0, r_dd=0, r_liq=0, r_sent=0)

    def test_array_order(self):
        """Channel order is return, sharpe, dd, liq, sent."""
        r = RewardVector.from_array([0.1, 0.2, 0.3, 0.4, 0.5])
        assert r.as_array().tolist() == [0.1, 0.2, 0.3, 0.4, 0.5]
        assert r.mean() == pytest.approx(0.3)


class TestComputeRewardVector:
    """Test per-candidate fusion over the equal-weight basket."""

    def test_basket_close(self, mini_corpus):
        """Day 3 basket: BTC +10%, ETH +20%, SOL flat -> +10%."""
        assert basket_candle(mini_corpus, D3, D2).close == pytest.approx(1.1)

    def test_long_day(self, mini_corpus):
        """A full long on day 3 earns the basket return less the fee."""
        r = compute_reward_vector(1.0, (0.8, 0.1, -0.2), D3, mini_corpus, RewardConfig())
        assert r.r_return == pytest.approx(math.tanh((0.1 - 0.001) / 0.02))
        assert r.r_sent == pytest.approx(1.0)
        assert r.r_dd <= 0
        assert all(-1.0 <= v <= 1.0 for v in r.as_array())

    def test_flat_position(self, mini_corpus):
        """No exposure: no return, no drawdown, degenerate Sharpe set to 0."""
        r = compute_reward_vector(0.0, (0.0, 1.0, 0.0), D3, mini_corpus, RewardConfig())
        assert r.r_return == 0.0
        assert r.r_dd == 0.0
        assert r.r_sharpe == 0.0
        # The thinnest leg is ETH with the highest gas.
        assert r.r_liq == pytest.approx(math.tanh((5.0 - 25.3 / 1000) / 10.0))

    def test_first_day_has_no_previous_close(self, mini_corpus):
        with pytest.raises(InvariantError):
            compute_reward_vector(1.0, (1.0, 0.0, 0.0), D1, mini_corpus, RewardConfig())


class TestChannelBounds:
    """Every channel stays in [-1, 1] over randomized inputs."""

    def test_scalar_channels(self):
        """1,000 random draws keep every scalar channel inside [-1, 1]."""
        rng = np.random.default_rng(21)
        for _ in range(1000):
            alpha = float(rng.uniform(-1, 1))
            prev, close = np.exp(rng.normal(0, 3, size=2))
            assert -1.0 <= reward_return(alpha, prev, close, float(rng.uniform(0, 100))) <= 1.0

            window = rng.normal(0, rng.uniform(1e-4, 0.5), size=int(rng.integers(2, 40)))
            assert -1.0 <= reward_sharpe(window, float(rng.uniform(1, 30))) <= 1.0

            path = np.exp(np.cumsum(rng.normal(0, 0.2, size=int(rng.integers(1, 10)))))
            assert -1.0 <= reward_drawdown(path, alpha) <= 0.0

            liq = reward_liquidity(
                float(rng.uniform(0, 1e9)), float(rng.uniform(1, 1e10)), float(rng.uniform(0, 500)), 5.0
            )
            assert -1.0 <= liq <= 1.0

            dim = int(rng.integers(1, 16))
            u, v = rng.normal(size=dim), rng.normal(size=dim)
            assert -1.0 <= reward_sentiment(u, v) <= 1.0

    def test_fused_vector(self, synthetic_corpus):
        rng = np.random.default_rng(22)
        days = synthetic_corpus.dates()[1:]
        dim = len(synthetic_corpus.sentiment[days[0]].vector)
        for _ in range(200):
            day = days[int(rng.integers(len(days)))]
            alpha = float(rng.uniform(-1, 1))
            r = compute_reward_vector(alpha, rng.normal(size=dim), day, synthetic_corpus, RewardConfig())
            assert np.all(np.abs(r.as_array()) <= 1.0)
