"""The five per-day reward channels and the learnable aggregator f_agg.

Each channel is squashed into [-1, 1] with ``tanh(x / scale)``; the
sentiment channel is a cosine similarity and already lies in range.
Channels are evaluated for the equal-weight BTC/ETH/SOL basket that the
scalar position signal alpha trades.
"""

import datetime as dt
import logging
import math
from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config import ASSETS, RewardConfig
from .errors import DegenerateError, InvariantError
from .market_data import Candle, MarketCorpus
from .metrics import max_drawdown
from .models import AggregatorParams

logger = logging.getLogger(__name__)

ORIGIN = "rewards"

CHANNELS = ("r_return", "r_sharpe", "r_dd", "r_liq", "r_sent")

_VAR_EPS = 1e-24


class RewardVector(BaseModel):
    """Five-channel reward for one candidate on one day."""

    model_config = ConfigDict(frozen=True)

    r_return: float = Field(ge=-1.0, le=1.0, allow_inf_nan=False)
    r_sharpe: float = Field(ge=-1.0, le=1.0, allow_inf_nan=False)
    r_dd: float = Field(ge=-1.0, le=1.0, allow_inf_nan=False)
    r_liq: float = Field(ge=-1.0, le=1.0, allow_inf_nan=False)
    r_sent: float = Field(ge=-1.0, le=1.0, allow_inf_nan=False)

    def as_array(self) -> np.ndarray:
        return np.array([self.r_return, self.r_sharpe, self.r_dd, self.r_liq, self.r_sent])

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "RewardVector":
        return cls(**dict(zip(CHANNELS, (float(v) for v in values), strict=True)))

    def mean(self) -> float:
        return math.fsum(self.as_array()) / len(CHANNELS)


def squash(x: float, scale: float) -> float:
    """Odd, strictly monotone map of the reals onto (-1, 1)."""
    if scale <= 0:
        raise InvariantError(f"squash scale must be positive, got {scale}", origin=ORIGIN)
    if not math.isfinite(x):
        raise InvariantError(f"squash input must be finite, got {x}", origin=ORIGIN)
    return math.tanh(x / scale)


def _check_alpha(alpha: float) -> None:
    if not -1.0 <= alpha <= 1.0:
        raise InvariantError(f"alpha must be in [-1, 1], got {alpha}", origin=ORIGIN)


# ============================================================================
# Channels
# ============================================================================


def reward_return(
    alpha: float, close_prev: float, close: float, fee_bps: float, scale: float = 0.02
) -> float:
    """Realized net gain of exposure alpha after fees."""
    _check_alpha(alpha)
    if close_prev <= 0 or close <= 0:
        raise InvariantError(f"prices must be positive, got {close_prev}, {close}", origin=ORIGIN)
    fee = fee_bps / 10_000
    return squash(alpha * (close / close_prev - 1.0) - abs(alpha) * fee, scale)


def ew_weights(n: int, halflife: float) -> np.ndarray:
    """Normalised weights 0.5 ** (age / halflife); the newest entry has age 0."""
    ages = np.arange(n - 1, -1, -1, dtype=float)
    w = 0.5 ** (ages / halflife)
    return w / w.sum()


def ew_sharpe(window: Sequence[float], halflife: float) -> float:
    """EW mean over EW standard deviation (biased EW variance)."""
    r = np.asarray(window, dtype=float)
    w = ew_weights(r.size, halflife)
    mean = float(w @ r)
    var = float(w @ (r - mean) ** 2)
    if var <= _VAR_EPS:
        raise DegenerateError("zero exponentially weighted variance", origin=ORIGIN)
    return mean / math.sqrt(var)


def ew_std(window: Sequence[float], halflife: float) -> float:
    r = np.asarray(window, dtype=float)
    if r.size == 0:
        return 0.0
    w = ew_weights(r.size, halflife)
    mean = float(w @ r)
    return math.sqrt(max(float(w @ (r - mean) ** 2), 0.0))


def reward_sharpe(window: Sequence[float], halflife: float, scale: float = 0.5) -> float:
    """Leave-one-out change in EW Sharpe caused by today's return.

    The full window (ending today) must have non-zero EW variance. A prior
    window too short or too flat to define a Sharpe contributes 0.
    """
    if len(window) < 2:
        raise InvariantError("sharpe window needs at least two returns", origin=ORIGIN)
    full = ew_sharpe(window, halflife)
    try:
        prior = ew_sharpe(window[:-1], halflife) if len(window) > 2 else 0.0
    except DegenerateError:
        prior = 0.0
    return squash(full - prior, scale)


def ohlc_path(candle: Candle, alpha: float) -> list[float]:
    """Intraday path implied by a daily bar for the given exposure.

    Long exposure sees [open, high, low, close]. Short exposure sees
    [open, low, high, close] on reciprocal prices, so a rally is its drawdown.
    """
    if alpha >= 0:
        return [candle.open, candle.high, candle.low, candle.close]
    return [1.0 / p for p in (candle.open, candle.low, candle.high, candle.close)]


def reward_drawdown(path: Sequence[float], alpha: float, scale: float = 0.05) -> float:
    """-squash(|alpha| * max drawdown of the path); always <= 0."""
    _check_alpha(alpha)
    if len(path) == 0:
        raise InvariantError("drawdown path is empty", origin=ORIGIN)
    return -squash(abs(alpha) * max_drawdown(path), scale)


def expected_slippage_bps(
    order_notional: float,
    day_volume: float,
    gas_price_mean_gwei: float,
    impact_coeff: float = 0.1,
    gas_scale: float = 1000.0,
) -> float:
    """Linear participation impact plus a gas term, in basis points."""
    if day_volume <= 0:
        raise InvariantError(f"day volume must be positive, got {day_volume}", origin=ORIGIN)
    return impact_coeff * (order_notional / day_volume) * 10_000 + gas_price_mean_gwei / gas_scale


def reward_liquidity(
    order_notional: float,
    day_volume: float,
    gas_price_mean_gwei: float,
    threshold_bps: float,
    impact_coeff: float = 0.1,
    gas_scale: float = 1000.0,
    scale: float = 10.0,
) -> float:
    """Bonus when expected slippage is below the threshold, penalty above."""
    slip = expected_slippage_bps(order_notional, day_volume, gas_price_mean_gwei, impact_coeff, gas_scale)
    return squash(threshold_bps - slip, scale)


def reward_sentiment(rationale_vec: Sequence[float], sentiment_vec: Sequence[float]) -> float:
    """Cosine similarity between rationale and market sentiment."""
    u = np.asarray(rationale_vec, dtype=float)
    v = np.asarray(sentiment_vec, dtype=float)
    if u.shape != v.shape:
        raise InvariantError(f"dimension mismatch: {u.shape} vs {v.shape}", origin=ORIGIN)
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise InvariantError("cosine similarity of a zero vector", origin=ORIGIN)
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


# ============================================================================
# Aggregation
# ============================================================================


def aggregate(params: AggregatorParams, r: RewardVector) -> float:
    """Scalar reward f_agg(r)."""
    if not params.is_finite():
        raise InvariantError("aggregator parameters are not finite", origin=ORIGIN)
    return float(params.forward(r.as_array())[0])


def init_aggregator(rng: np.random.Generator, hidden: int = 8) -> AggregatorParams:
    return AggregatorParams.init(rng, len(CHANNELS), hidden)


# ============================================================================
# Per-candidate fusion
# ============================================================================


def basket_log_returns(corpus: MarketCorpus, days: Sequence[dt.date]) -> list[float]:
    """Equal-weight basket log-returns between consecutive days."""
    out: list[float] = []
    for prev, day in zip(days, days[1:]):
        gross = sum(corpus.candle(a, day).close / corpus.candle(a, prev).close for a in ASSETS)
        out.append(math.log(gross / len(ASSETS)))
    return out


def basket_candle(corpus: MarketCorpus, day: dt.date, prev: dt.date) -> Candle:
    """Equal-weight basket bar, each asset normalised to its previous close."""
    bars = [corpus.candle(a, day) for a in ASSETS]
    refs = [corpus.candle(a, prev).close for a in ASSETS]
    n = len(ASSETS)
    o = sum(b.open / r for b, r in zip(bars, refs)) / n
    c = sum(b.close / r for b, r in zip(bars, refs)) / n
    h = max(sum(b.high / r for b, r in zip(bars, refs)) / n, o, c)
    low = min(sum(b.low / r for b, r in zip(bars, refs)) / n, o, c)
    return Candle(
        asset=ASSETS[0], date=day, open=o, high=h, low=low, close=c, volume=0.0, market_cap=0.0
    )


def compute_reward_vector(
    alpha: float,
    rationale_vec: Sequence[float],
    day: dt.date,
    corpus: MarketCorpus,
    config: RewardConfig,
) -> RewardVector:
    """All five channels for one candidate signal on ``day``.

    Uses only data dated on or before ``day``: today's close realises the
    return, the trailing basket returns feed the Sharpe window, and the
    liquidity channel is charged on the thinnest asset of the basket.
    """
    dates = [d for d in corpus.dates() if d <= day]
    if len(dates) < 2 or dates[-1] != day:
        raise InvariantError(f"need a previous trading day before {day}", origin=ORIGIN)
    prev = dates[-2]

    basket = basket_candle(corpus, day, prev)
    r_return = reward_return(alpha, 1.0, basket.close, config.fee_bps, config.return_scale)

    history = basket_log_returns(corpus, dates[-(config.sharpe_window + 1) :])
    # Exposure-scaled strategy returns; the last entry is today.
    window = [alpha * r - abs(alpha) * config.fee_bps / 10_000 for r in history]
    if len(window) >= 2:
        try:
            r_sharpe = reward_sharpe(window, config.ew_halflife_days, config.sharpe_scale)
        except DegenerateError:
            logger.warning("Degenerate Sharpe window on %s; channel set to 0", day)
            r_sharpe = 0.0
    else:
        r_sharpe = 0.0

    r_dd = reward_drawdown(ohlc_path(basket, alpha), alpha, config.drawdown_scale)

    notional = abs(alpha) * config.liquidity_notional_usd / len(ASSETS)
    r_liq = min(
        reward_liquidity(
            notional,
            corpus.candle(a, day).volume,
            corpus.onchain_for(a, day).gas_price_mean_gwei,
            config.slippage_threshold_bps,
            config.impact_coeff,
            config.gas_scale,
            config.liquidity_scale,
        )
        for a in ASSETS
    )

    sentiment = corpus.sentiment_for(day).vector
    if not np.any(rationale_vec):
        r_sent = 0.0
    else:
        r_sent = reward_sentiment(rationale_vec, sentiment)

    return RewardVector(r_return=r_return, r_sharpe=r_sharpe, r_dd=r_dd, r_liq=r_liq, r_sent=r_sent)
