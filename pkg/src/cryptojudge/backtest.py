"""Daily-rebalancing portfolio simulator.

The ledger starts from an endowment (cash reserve plus equal notional in
BTC/ETH/SOL at the first close, no fee). On every later day the policy sees
the fused context for that day only, returns a scalar alpha, and the trade
executes at that day's close:

- alpha > 0 spends ``alpha * cash`` equally across assets; each leg pays its fee
  out of its notional
- alpha < 0 sells ``|alpha|`` of every holding, fee taken from proceeds
- alpha = 0 leaves the ledger untouched

Slippage is one draw per fill from N(0, sd_asset); its absolute value always
worsens the execution price. Holdings and cash never go negative.
"""

import asyncio
import datetime as dt
import logging
import math
from collections.abc import Callable, Sequence
from enum import StrEnum

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from .config import ASSETS, Asset, BacktestConfig
from .errors import DegenerateError, InvariantError
from .market_data import MarketCorpus, PromptContext, RegimeWindow, build_prompt_context
from .metrics import daily_mean, log_returns, max_drawdown, sharpe, total_return
from .seeding import rng_for

logger = logging.getLogger(__name__)

ORIGIN = "backtest"

Policy = Callable[[PromptContext], float]


class Side(StrEnum):
    BUY = "buy"
    SELL = "sell"


class TradeFill(BaseModel):
    """One executed order; ``executed_price = close * (1 + slippage_applied)``."""

    model_config = ConfigDict(frozen=True)

    date: dt.date
    asset: Asset
    side: Side
    units: float
    notional: float
    executed_price: float
    fee_paid: float
    slippage_applied: float


class WealthPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    date: dt.date
    wealth: float


class PortfolioState(BaseModel):
    """Cash, units per asset and the marked wealth series."""

    model_config = ConfigDict(frozen=True)

    cash: float = Field(ge=0.0)
    holdings: dict[Asset, float]
    wealth_series: list[WealthPoint] = Field(default_factory=list)

    def wealth(self, prices: dict[Asset, float]) -> float:
        return self.cash + math.fsum(self.holdings[a] * prices[a] for a in ASSETS)

    def mark(self, day: dt.date, prices: dict[Asset, float]) -> "PortfolioState":
        point = WealthPoint(date=day, wealth=self.wealth(prices))
        return self.model_copy(update={"wealth_series": [*self.wealth_series, point]})


class MetricsReport(BaseModel):
    total_return: float
    daily_return_mean: float
    sharpe: float | None
    max_drawdown: float
    n_days: int = Field(ge=1)
    degenerate: bool = False


class BacktestResult(BaseModel):
    """Everything a single run produces; serialised into report.json."""

    window: str
    policy: str
    seed: int
    metrics: MetricsReport
    wealth: list[WealthPoint]
    fills: list[TradeFill]
    clamped_days: int = 0


def _check_prices(prices: dict[Asset, float]) -> None:
    for asset in ASSETS:
        price = prices.get(asset)
        if price is None or not price > 0:
            raise InvariantError(f"price for {asset} must be positive, got {price}", origin=ORIGIN)


def init_portfolio(
    config: BacktestConfig, first_day_prices: dict[Asset, float], day: dt.date | None = None
) -> PortfolioState:
    """Endowment: cash reserve plus equal notional per asset at the first close."""
    if config.initial_capital <= 0:
        raise InvariantError("initial capital must be positive", origin=ORIGIN)
    _check_prices(first_day_prices)
    cash = config.initial_capital * config.cash_fraction
    per_asset = config.initial_capital * (1.0 - config.cash_fraction) / len(ASSETS)
    holdings = {a: per_asset / first_day_prices[a] for a in ASSETS}
    state = PortfolioState(cash=cash, holdings=holdings)
    return state.mark(day, first_day_prices) if day is not None else state


def rebalance(
    state: PortfolioState,
    alpha: float,
    prices: dict[Asset, float],
    rng: np.random.Generator,
    config: BacktestConfig,
    day: dt.date,
) -> tuple[PortfolioState, list[TradeFill]]:
    """Apply one alpha-driven trade at the given closes."""
    _check_prices(prices)
    alpha = float(np.clip(alpha, -1.0, 1.0))
    fee = config.fee_rate
    cash = state.cash
    holdings = dict(state.holdings)
    fills: list[TradeFill] = []

    if alpha > 0 and cash > 0:
        notional = alpha * cash / len(ASSETS)
        for asset in ASSETS:
            slip = abs(float(rng.normal(0.0, config.slippage_sd.get(asset, 0.0))))
            price = prices[asset] * (1.0 + slip)
            fee_paid = fee * notional
            units = (notional - fee_paid) / price
            holdings[asset] += units
            cash -= notional
            fills.append(
                TradeFill(
                    date=day,
                    asset=asset,
                    side=Side.BUY,
                    units=units,
                    notional=notional,
                    executed_price=price,
                    fee_paid=fee_paid,
                    slippage_applied=slip,
                )
            )
        # Float residue from the three-way split.
        cash = max(cash, 0.0)
    elif alpha < 0:
        for asset in ASSETS:
            units = -alpha * holdings[asset]
            if units <= 0:
                continue
            slip = abs(float(rng.normal(0.0, config.slippage_sd.get(asset, 0.0))))
            price = prices[asset] * (1.0 - slip)
            notional = units * price
            fee_paid = fee * notional
            holdings[asset] = holdings[asset] - units if alpha > -1.0 else 0.0
            cash += notional - fee_paid
            fills.append(
                TradeFill(
                    date=day,
                    asset=asset,
                    side=Side.SELL,
                    units=units,
                    notional=notional,
                    executed_price=price,
                    fee_paid=fee_paid,
                    slippage_applied=-slip,
                )
            )

    return state.model_copy(update={"cash": cash, "holdings": holdings}), fills


def compute_metrics(wealth: Sequence[float]) -> MetricsReport:
    """Report metrics over a wealth series; an undefined Sharpe sets ``degenerate``."""
    if len(wealth) < 2:
        raise InvariantError("metrics need at least two wealth points", origin=ORIGIN)
    rets = log_returns(wealth)
    try:
        s: float | None = sharpe(rets) if len(rets) >= 2 else None
    except DegenerateError:
        s = None
    if s is None:
        logger.warning("Sharpe undefined for this run (flat or too-short return series)")
    return MetricsReport(
        total_return=total_return(wealth[0], wealth[-1]),
        daily_return_mean=daily_mean(rets),
        sharpe=s,
        max_drawdown=max_drawdown(wealth),
        n_days=len(rets),
        degenerate=s is None,
    )


def run_backtest(
    window: RegimeWindow,
    policy: Policy,
    corpus: MarketCorpus,
    config: BacktestConfig,
    *,
    policy_name: str = "custom",
    lookback_days: int = 1,
) -> BacktestResult:
    """Simulate one regime window day by day."""
    days = window.days()
    if len(days) < 2:
        raise InvariantError(f"window {window.key} spans fewer than two days", origin=ORIGIN)
    rng = rng_for(config.rng_seed, f"backtest.{window.key}")

    state = init_portfolio(config, corpus.closes(days[0]), days[0])
    fills: list[TradeFill] = []
    clamped = 0
    for day in days[1:]:
        context = build_prompt_context(day, corpus, lookback_days)
        raw = float(policy(context))
        alpha = float(np.clip(raw, -1.0, 1.0))
        if alpha != raw:
            clamped += 1
            logger.warning("Policy %s returned alpha=%s on %s; clamped to %s", policy_name, raw, day, alpha)
        prices = corpus.closes(day)
        state, day_fills = rebalance(state, alpha, prices, rng, config, day)
        fills.extend(day_fills)
        state = state.mark(day, prices)

    metrics = compute_metrics([p.wealth for p in state.wealth_series])
    logger.info(
        "Backtest %s/%s: total_return=%.4f over %d days", window.key, policy_name, metrics.total_return, metrics.n_days
    )
    return BacktestResult(
        window=window.key,
        policy=policy_name,
        seed=config.rng_seed,
        metrics=metrics,
        wealth=state.wealth_series,
        fills=fills,
        clamped_days=clamped,
    )


async def run_windows(
    windows: Sequence[RegimeWindow],
    policy_for: Callable[[RegimeWindow], tuple[str, Policy]],
    corpus: MarketCorpus,
    config: BacktestConfig,
    *,
    jobs: int = 1,
    lookback_days: int = 1,
) -> list[BacktestResult]:
    """Run independent windows on worker threads, at most ``jobs`` at once.

    Results come back in the order of ``windows`` regardless of completion order.
    """
    if jobs < 1:
        raise InvariantError(f"jobs must be >= 1, got {jobs}", origin=ORIGIN)
    gate = asyncio.Semaphore(jobs)

    async def one(window: RegimeWindow) -> BacktestResult:
        name, policy = policy_for(window)
        async with gate:
            return await asyncio.to_thread(
                run_backtest,
                window,
                policy,
                corpus,
                config,
                policy_name=name,
                lookback_days=lookback_days,
            )

    return list(await asyncio.gather(*(one(w) for w in windows)))


class BacktestReport(BaseModel):
    """Contents of report.json: one entry per (window, policy) run."""

    runs: list[BacktestResult]

    def wealth_frame(self) -> pd.DataFrame:
        rows = [
            {"window": r.window, "policy": r.policy, "date": p.date.isoformat(), "wealth": p.wealth}
            for r in self.runs
            for p in r.wealth
        ]
        return pd.DataFrame(rows, columns=["window", "policy", "date", "wealth"])

    def metrics_rows(self) -> list[tuple[str, str, str, str, str, int]]:
        def fmt(x: float | None) -> str:
            return "n/a" if x is None else f"{x:.4f}"

        return [
            (
                r.window,
                r.policy,
                f"{100 * r.metrics.total_return:.2f}%",
                fmt(r.metrics.sharpe),
                f"{100 * r.metrics.max_drawdown:.2f}%",
                r.metrics.n_days,
            )
            for r in self.runs
        ]


def wealth_frame(result: BacktestResult) -> pd.DataFrame:
    """``date,wealth`` rows for one run."""
    return pd.DataFrame(
        [{"date": p.date.isoformat(), "wealth": p.wealth} for p in result.wealth], columns=["date", "wealth"]
    )
