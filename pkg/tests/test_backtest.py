"""Tests for the portfolio simulator, its metrics and the window runner."""

import math
from pathlib import Path

import numpy as np
import pytest

from cryptojudge.backtest import (
    BacktestReport,
    Side,
    compute_metrics,
    init_portfolio,
    rebalance,
    run_backtest,
    run_windows,
    wealth_frame,
)
from cryptojudge.config import ASSETS, Asset, BacktestConfig
from cryptojudge.errors import DegenerateError, InvariantError
from cryptojudge.market_data import find_window, load_regimes
from cryptojudge.metrics import daily_mean, log_returns, max_drawdown, sharpe, total_return
from cryptojudge.policies import schedule_policy
from cryptojudge.seeding import rng_for

from .conftest import D1, D2, D3, D4

NO_SLIP = {Asset.BTC: 0.0, Asset.ETH: 0.0, Asset.SOL: 0.0}
PRICES = {Asset.BTC: 100.0, Asset.ETH: 10.0, Asset.SOL: 1.0}


@pytest.fixture
def window(mini_dir: Path):
    return find_window(load_regimes(mini_dir / "regimes.csv"), "BTC:bull")


class TestMetrics:
    """Test the reported performance metrics."""

    def test_total_return(self):
        """Includes the 106.98 to 176.64 example."""
        assert total_return(1_000_000, 1_000_000) == 0.0
        assert total_return(106.98, 176.64) == pytest.approx(0.6512, abs=1e-4)
        assert total_return(100, 50) == -0.5

    def test_total_return_rejects_zero_start(self):
        with pytest.raises(InvariantError):
            total_return(0, 1)

    def test_sharpe(self):
        """Mean over sample standard deviation, not annualised."""
        assert sharpe([0.01, -0.01]) == pytest.approx(0.0)
        assert sharpe([0.02, 0.00, 0.01]) == pytest.approx(1.0)

    def test_sharpe_zero_variance(self):
        """Flat returns have no Sharpe ratio."""
        with pytest.raises(DegenerateError):
            sharpe([0.01, 0.01])

    def test_daily_mean(self):
        assert daily_mean([0.1]) == 0.1
        assert daily_mean([0.1, -0.1]) == 0.0
        assert daily_mean([math.log(1.01), math.log(1.02)]) == pytest.approx(
            0.5 * (math.log(1.01) + math.log(1.02))
        )
        with pytest.raises(InvariantError):
            daily_mean([])

    def test_max_drawdown(self):
        assert max_drawdown([1, 2, 3]) == 0.0
        assert max_drawdown([100, 50, 75]) == 0.5

    def test_max_drawdown_brute_force(self):
        """Agrees with an O(n^2) scan of a random walk."""
        w = np.exp(np.cumsum(np.random.default_rng(3).normal(0, 0.03, size=100)))
        brute = max((w[i] - w[j]) / w[i] for i in range(100) for j in range(i, 100))
        assert max_drawdown(w) == pytest.approx(brute)

    def test_log_returns(self):
        assert log_returns([100, 110]).tolist() == pytest.approx([math.log(1.1)])

    def test_compute_metrics_needs_two_points(self):
        with pytest.raises(InvariantError):
            compute_metrics([1.0])


class TestInitPortfolio:
    """Test the initial endowment."""

    def test_defaults(self):
        """Half cash, the rest split equally by value."""
        state = init_portfolio(BacktestConfig(), PRICES)
        assert state.cash == 500_000
        for asset in ASSETS:
            assert state.holdings[asset] * PRICES[asset] == pytest.approx(166_666.67, abs=0.01)

    def test_all_cash(self):
        state = init_portfolio(BacktestConfig(cash_fraction=1.0), PRICES)
        assert state.cash == 1_000_000
        assert all(v == 0 for v in state.holdings.values())

    def test_zero_capital(self):
        with pytest.raises(ValueError):
            BacktestConfig(initial_capital=0)

    def test_non_positive_price(self):
        with pytest.raises(InvariantError):
            init_portfolio(BacktestConfig(), {**PRICES, Asset.SOL: 0.0})


class TestRebalance:
    """Test a single alpha-driven trade."""

    def test_zero_alpha(self):
        """alpha = 0 trades nothing."""
        config = BacktestConfig()
        state = init_portfolio(config, PRICES)
        after, fills = rebalance(state, 0.0, PRICES, rng_for(0, "t"), config, D2)
        assert fills == []
        assert after == state

    def test_full_buy(self):
        """alpha = 1 on 300,000 cash: three 100,000 buys, 300 in fees, cash left at zero."""
        config = BacktestConfig(initial_capital=600_000, slippage_sd=NO_SLIP)
        state = init_portfolio(config, PRICES)
        assert state.cash == 300_000
        after, fills = rebalance(state, 1.0, PRICES, rng_for(0, "t"), config, D2)
        assert [f.side for f in fills] == [Side.BUY] * 3
        assert [f.notional for f in fills] == pytest.approx([100_000.0] * 3)
        assert math.fsum(f.fee_paid for f in fills) == pytest.approx(300.0)
        for fill in fills:
            assert fill.units == pytest.approx(99_900.0 / PRICES[fill.asset])
        assert after.cash == pytest.approx(0.0, abs=1e-6)
        assert after.cash >= 0

    def test_full_sell(self):
        """alpha = -1 liquidates everything; proceeds net of the fee go to cash."""
        config = BacktestConfig(slippage_sd=NO_SLIP)
        state = init_portfolio(config, PRICES)
        after, fills = rebalance(state, -1.0, PRICES, rng_for(0, "t"), config, D2)
        assert all(v == 0 for v in after.holdings.values())
        gross = math.fsum(f.notional for f in fills)
        assert gross == pytest.approx(500_000)
        assert after.cash == pytest.approx(state.cash + gross * 0.999)

    def test_slippage_always_hurts(self):
        """Buys fill above and sells below the quoted price."""
        config = BacktestConfig(slippage_sd={a: 0.01 for a in ASSETS})
        state = init_portfolio(config, PRICES)
        rng = rng_for(5, "t")
        for alpha in (0.7, -0.4, 1.0, -1.0):
            state, fills = rebalance(state, alpha, PRICES, rng, config, D2)
            for fill in fills:
                close = PRICES[fill.asset]
                assert fill.executed_price == pytest.approx(close * (1 + fill.slippage_applied))
                if fill.side == Side.BUY:
                    assert fill.executed_price >= close
                else:
                    assert fill.executed_price <= close
                assert fill.fee_paid == pytest.approx(0.001 * fill.notional)
            assert state.cash >= 0
            assert all(v >= 0 for v in state.holdings.values())

    def test_accounting_identity(self):
        """Wealth equals cash plus marked holdings after every step of 100 random runs."""
        moves = np.random.default_rng(4)
        for run in range(100):
            sd = {a: float(moves.uniform(0, 0.01)) for a in ASSETS}
            config = BacktestConfig(
                cash_fraction=float(moves.uniform(0, 1)), fee_bps=float(moves.uniform(0, 50)), slippage_sd=sd
            )
            rng = rng_for(run, "accounting")
            prices = {a: p * float(moves.uniform(0.5, 2.0)) for a, p in PRICES.items()}
            state = init_portfolio(config, prices, D1)
            for _ in range(30):
                prices = {a: p * math.exp(moves.normal(0, 0.05)) for a, p in prices.items()}
                state, _ = rebalance(state, float(moves.uniform(-1, 1)), prices, rng, config, D2)
                state = state.mark(D2, prices)
                expected = state.cash + sum(state.holdings[a] * prices[a] for a in ASSETS)
                assert state.wealth_series[-1].wealth == pytest.approx(expected, rel=1e-9)
                assert state.cash >= 0
                assert all(v >= 0 for v in state.holdings.values())


class TestRunBacktest:
    """Test full window simulations."""

    def test_hand_ledger(self, mini_corpus, mini_dir: Path, window):
        """Scripted +0.5 / -0.5 / 0 over the mini fixture with zero slippage."""
        config = BacktestConfig(slippage_sd=NO_SLIP)
        policy = schedule_policy(mini_dir / "schedule.json")
        result = run_backtest(window, policy, mini_corpus, config, policy_name="schedule")

        fee = 0.001
        d1 = {Asset.BTC: 100.0, Asset.ETH: 10.0, Asset.SOL: 1.0}
        d2 = {Asset.BTC: 110.0, Asset.ETH: 10.0, Asset.SOL: 2.0}
        d3 = {Asset.BTC: 121.0, Asset.ETH: 12.0, Asset.SOL: 2.0}
        d4 = {Asset.BTC: 110.0, Asset.ETH: 9.0, Asset.SOL: 1.0}

        cash = 500_000.0
        units = {a: 500_000.0 / 3 / d1[a] for a in ASSETS}
        w1 = cash + sum(units[a] * d1[a] for a in ASSETS)

        leg = 0.5 * cash / 3
        for a in ASSETS:
            units[a] += leg * (1 - fee) / d2[a]
        cash -= 3 * leg
        w2 = cash + sum(units[a] * d2[a] for a in ASSETS)

        for a in ASSETS:
            sold = 0.5 * units[a]
            cash += sold * d3[a] * (1 - fee)
            units[a] -= sold
        w3 = cash + sum(units[a] * d3[a] for a in ASSETS)

        w4 = cash + sum(units[a] * d4[a] for a in ASSETS)

        assert [p.date for p in result.wealth] == [D1, D2, D3, D4]
        assert [p.wealth for p in result.wealth] == pytest.approx([w1, w2, w3, w4], rel=1e-12)
        assert len(result.fills) == 6
        assert result.metrics.total_return == pytest.approx(w4 / w1 - 1)
        assert result.metrics.n_days == 3

    def test_hold_equals_marked_endowment(self, mini_corpus, window):
        """Holding with no fees ends at the endowment marked to the last close."""
        config = BacktestConfig(slippage_sd=NO_SLIP, fee_bps=0)
        result = run_backtest(window, lambda ctx: 0.0, mini_corpus, config)
        d1 = mini_corpus.closes(D1)
        d4 = mini_corpus.closes(D4)
        expected = 500_000 + sum(500_000 / 3 / d1[a] * d4[a] for a in ASSETS)
        assert result.wealth[-1].wealth == pytest.approx(expected, rel=1e-12)
        assert result.fills == []

    def test_all_cash_hold_is_degenerate(self, mini_corpus, window):
        """All cash and no trades leaves Sharpe undefined."""
        config = BacktestConfig(cash_fraction=1.0)
        result = run_backtest(window, lambda ctx: 0.0, mini_corpus, config)
        assert result.metrics.total_return == 0.0
        assert result.metrics.sharpe is None
        assert result.metrics.degenerate

    def test_deterministic(self, synthetic_corpus):
        """Same seed, same wealth path."""
        window = find_window(load_regimes(), "ETH:bull")
        config = BacktestConfig(rng_seed=3)
        a = run_backtest(window, lambda ctx: 0.3, synthetic_corpus, config)
        b = run_backtest(window, lambda ctx: 0.3, synthetic_corpus, config)
        assert a.model_dump() == b.model_dump()

    def test_fees_never_help(self, synthetic_corpus):
        """Zero-fee final wealth is never below the 10 bps run on the same seed."""
        window = find_window(load_regimes(), "ETH:bull")
        for seed in range(25):
            alphas = np.random.default_rng(seed).uniform(-1, 1, size=64)

            def policy(ctx, alphas=alphas):
                return float(alphas[(ctx.date - window.start).days])

            free = run_backtest(window, policy, synthetic_corpus, BacktestConfig(fee_bps=0, rng_seed=seed))
            paid = run_backtest(window, policy, synthetic_corpus, BacktestConfig(fee_bps=10, rng_seed=seed))
            assert free.wealth[-1].wealth >= paid.wealth[-1].wealth, seed

    def test_clamp_matches_preclamped(self, mini_corpus, window):
        """Out-of-range alphas behave like their clamped values."""
        config = BacktestConfig()
        wild = run_backtest(window, lambda ctx: 3.0, mini_corpus, config, policy_name="p")
        tame = run_backtest(window, lambda ctx: 1.0, mini_corpus, config, policy_name="p")
        assert wild.wealth == tame.wealth
        assert wild.fills == tame.fills
        assert wild.clamped_days == 3
        assert tame.clamped_days == 0

    def test_policy_sees_only_its_day(self, mini_corpus, window):
        """Each call gets the current day's context, in order."""
        seen = []

        def policy(ctx):
            seen.append(ctx.date)
            assert all(mini_corpus.article(i).timestamp.date() <= ctx.date for i in ctx.news_digest)
            return 0.0

        run_backtest(window, policy, mini_corpus, BacktestConfig())
        assert seen == [D2, D3, D4]


class TestReportFrames:
    def test_report_frames(self, mini_corpus, window):
        """Wealth and fills frames have the documented columns."""
        result = run_backtest(window, lambda ctx: 0.0, mini_corpus, BacktestConfig(), policy_name="flat")
        frame = wealth_frame(result)
        assert list(frame.columns) == ["date", "wealth"]
        assert len(frame) == 4
        report = BacktestReport(runs=[result])
        assert report.wealth_frame()["window"].unique().tolist() == ["BTC:bull"]
        assert report.metrics_rows()[0][:2] == ("BTC:bull", "flat")


class TestRunWindows:
    """Test the concurrent window runner."""

    @pytest.mark.asyncio
    async def test_parallel_matches_sequential(self, synthetic_corpus):
        windows = [find_window(load_regimes(), "ETH:bull"), find_window(load_regimes(), "ETH:bull")]
        config = BacktestConfig(rng_seed=2)
        results = await run_windows(windows, lambda w: ("long", lambda ctx: 1.0), synthetic_corpus, config, jobs=2)
        single = run_backtest(windows[0], lambda ctx: 1.0, synthetic_corpus, config, policy_name="long")
        assert [r.window for r in results] == ["ETH:bull", "ETH:bull"]
        assert results[0].model_dump() == single.model_dump()
        assert results[1].model_dump() == single.model_dump()

    @pytest.mark.asyncio
    async def test_jobs_must_be_positive(self, synthetic_corpus):
        with pytest.raises(InvariantError):
            await run_windows([], lambda w: ("x", lambda ctx: 0.0), synthetic_corpus, BacktestConfig(), jobs=0)
