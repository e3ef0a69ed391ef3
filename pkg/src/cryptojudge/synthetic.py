"""Deterministic synthetic market corpus.

Generates all four streams for a date range: geometric random-walk candles
with a configurable drift, on-chain activity, sentiment vectors whose first
axis tracks the day's basket move, and news with planted wire-service
repeats for the de-duplicator to catch.
"""

import datetime as dt
import math
from collections.abc import Mapping

import numpy as np

from .config import ASSETS, DEFAULT_PUBLISHERS, Asset
from .market_data import Candle, MarketCorpus, NewsArticle, OnChainDaily, SentimentSnapshot
from .seeding import rng_for

BASE_PRICES: dict[Asset, float] = {Asset.BTC: 80_000.0, Asset.ETH: 2_500.0, Asset.SOL: 150.0}
BASE_VOLUME: dict[Asset, float] = {Asset.BTC: 3.0e10, Asset.ETH: 1.5e10, Asset.SOL: 3.0e9}
SUPPLY: dict[Asset, float] = {Asset.BTC: 1.98e7, Asset.ETH: 1.2e8, Asset.SOL: 5.1e8}
BASE_GAS: dict[Asset, float] = {Asset.BTC: 20.0, Asset.ETH: 12.0, Asset.SOL: 0.5}

_HEADLINES = {
    True: [
        "{asset} rallies as institutional inflows accelerate",
        "{asset} climbs on strong exchange demand and rising open interest",
        "Analysts raise {asset} targets after a firm daily close",
    ],
    False: [
        "{asset} slides as traders de-risk ahead of macro data",
        "{asset} drops on heavy exchange outflows and liquidations",
        "Selling pressure weighs on {asset} after a weak daily close",
    ],
}

_BODY = (
    "Market participants pointed to {reason} as {asset} moved {pct:.2f} percent "
    "over the session, with volumes {vol_word} the thirty day average and "
    "on-chain activity {chain_word} across major venues. Desk strategists said "
    "positioning remains {stance} into the next session while funding rates "
    "stay {funding} and options skew {skew}."
)


def _as_map(value: float | Mapping[Asset, float], default: float = 0.0) -> dict[Asset, float]:
    if isinstance(value, Mapping):
        return {a: float(value.get(a, default)) for a in ASSETS}
    return {a: float(value) for a in ASSETS}


def _article_text(asset: Asset, pct: float, rng: np.random.Generator) -> tuple[str, str]:
    up = pct >= 0
    headline = _HEADLINES[up][int(rng.integers(len(_HEADLINES[up])))].format(asset=asset)
    body = _BODY.format(
        reason=rng.choice(["ETF flows", "miner selling", "a large OTC block", "macro headlines"]),
        asset=asset,
        pct=pct,
        vol_word=rng.choice(["above", "below", "near"]),
        chain_word=rng.choice(["picking up", "cooling", "steady"]),
        stance="constructive" if up else "defensive",
        funding=rng.choice(["positive", "flat", "negative"]),
        skew=rng.choice(["favours calls", "favours puts", "is balanced"]),
    )
    return headline, body


def generate_corpus(
    start: dt.date,
    days: int,
    *,
    seed: int = 0,
    drift: float | Mapping[Asset, float] = 0.0,
    vol: float | Mapping[Asset, float] = 0.02,
    sentiment_dim: int = 8,
    sentiment_noise: float = 0.3,
    repeats_per_day: int = 1,
) -> MarketCorpus:
    """Build a ``days``-long corpus starting at ``start``.

    ``drift`` and ``vol`` are daily log-return mean and standard deviation,
    scalar or per asset. Each day gets one article per asset plus
    ``repeats_per_day`` verbatim re-publications by other outlets.
    """
    if days < 1:
        raise ValueError(f"days must be >= 1, got {days}")
    if sentiment_dim < 1:
        raise ValueError(f"sentiment_dim must be >= 1, got {sentiment_dim}")
    drifts = _as_map(drift)
    vols = _as_map(vol, 0.02)
    dates = [start + dt.timedelta(days=i) for i in range(days)]

    candles: list[Candle] = []
    onchain: list[OnChainDaily] = []
    moves: dict[Asset, np.ndarray] = {}
    for asset in ASSETS:
        rng = rng_for(seed, f"synthetic.candles.{asset}")
        rets = drifts[asset] + vols[asset] * rng.standard_normal(days)
        moves[asset] = rets
        prev_close = BASE_PRICES[asset]
        for day, r in zip(dates, rets):
            close = prev_close * math.exp(float(r))
            open_ = prev_close
            wick = vols[asset] * 0.5
            high = max(open_, close) * (1.0 + abs(float(rng.normal(0.0, wick))))
            low = min(open_, close) * (1.0 - min(abs(float(rng.normal(0.0, wick))), 0.5))
            volume = BASE_VOLUME[asset] * math.exp(float(rng.normal(0.0, 0.25)))
            candles.append(
                Candle(
                    asset=asset,
                    date=day,
                    open=open_,
                    high=high,
                    low=low,
                    close=close,
                    volume=volume,
                    market_cap=close * SUPPLY[asset],
                )
            )
            prev_close = close

        chain_rng = rng_for(seed, f"synthetic.onchain.{asset}")
        for day in dates:
            gas_mean = BASE_GAS[asset] * math.exp(float(chain_rng.normal(0.0, 0.3)))
            onchain.append(
                OnChainDaily(
                    asset=asset,
                    date=day,
                    tx_count=int(chain_rng.integers(200_000, 1_500_000)),
                    active_wallets=int(chain_rng.integers(300_000, 900_000)),
                    value_usd=float(chain_rng.uniform(5e8, 5e9)),
                    gas_mean_gwei=gas_mean,
                    gas_median_gwei=gas_mean * float(chain_rng.uniform(0.6, 0.95)),
                    gas_used=int(chain_rng.integers(10**9, 10**11)),
                )
            )

    basket = np.mean([moves[a] for a in ASSETS], axis=0)
    scale = float(np.mean(list(vols.values()))) or 1.0
    sent_rng = rng_for(seed, "synthetic.sentiment")
    sentiment: list[SentimentSnapshot] = []
    for day, move in zip(dates, basket):
        vec = sentiment_noise * sent_rng.standard_normal(sentiment_dim)
        vec[0] += math.tanh(float(move) / scale)
        sentiment.append(SentimentSnapshot(date=day, vector=tuple(float(v) for v in vec)))

    news_rng = rng_for(seed, "synthetic.news")
    news: list[NewsArticle] = []
    for i, day in enumerate(dates):
        base = dt.datetime.combine(day, dt.time(8, 0), tzinfo=dt.UTC)
        for j, asset in enumerate(ASSETS):
            pct = 100.0 * (math.exp(float(moves[asset][i])) - 1.0)
            headline, body = _article_text(asset, pct, news_rng)
            published = base + dt.timedelta(hours=2 * j)
            origin_pub = DEFAULT_PUBLISHERS[j % len(DEFAULT_PUBLISHERS)]
            news.append(
                NewsArticle(
                    id=f"{day:%Y%m%d}-{asset.lower()}",
                    ts=published,
                    publisher=origin_pub,
                    url=f"https://news.example/{day:%Y/%m/%d}/{asset.lower()}",
                    headline=headline,
                    body=body,
                )
            )
            if j < repeats_per_day:
                repub = DEFAULT_PUBLISHERS[(j + 1) % len(DEFAULT_PUBLISHERS)]
                news.append(
                    NewsArticle(
                        id=f"{day:%Y%m%d}-{asset.lower()}-wire",
                        ts=published + dt.timedelta(minutes=45),
                        publisher=repub,
                        url=f"https://wire.example/{day:%Y/%m/%d}/{asset.lower()}",
                        headline=headline,
                        body=body,
                    )
                )

    return MarketCorpus.from_records(candles, onchain, news, sentiment)
