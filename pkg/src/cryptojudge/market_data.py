"""Market-data corpus: fixture loading, validation and prompt-context fusion.

Four raw streams (daily candles, on-chain activity, news, sentiment vectors)
are loaded from files through a ``MarketDataSource`` adapter, validated into
pydantic records, de-duplicated, and frozen into a ``MarketCorpus``. Missing
days are hard errors; nothing is imputed.
"""

import datetime as dt
import json
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from importlib import resources
from pathlib import Path
from typing import Any, Protocol, TypeVar

import pandas as pd
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from .artifacts import write_atomic
from .config import ASSETS, Asset, DataConfig
from .errors import DataGapError, InputError, InvariantError
from .simhash import dedup_news, simhash64

logger = logging.getLogger(__name__)

ORIGIN = "market-data"

CANDLE_COLUMNS = ["asset", "date", "open", "high", "low", "close", "volume", "market_cap"]
ONCHAIN_COLUMNS = [
    "asset",
    "date",
    "tx_count",
    "active_wallets",
    "value_usd",
    "gas_mean_gwei",
    "gas_median_gwei",
    "gas_used",
]
REGIME_COLUMNS = ["asset", "label", "start", "end", "open", "close"]

FIXTURE_FILES = {
    "candles": "candles.csv",
    "onchain": "onchain.csv",
    "news": "news.jsonl",
    "sentiment": "sentiment.csv",
    "regimes": "regimes.csv",
}


# ============================================================================
# Records
# ============================================================================


class _Record(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")


class Candle(_Record):
    """One daily OHLC bar with volume and market cap (USD)."""

    asset: Asset
    date: dt.date
    open: float = Field(gt=0)
    high: float = Field(gt=0)
    low: float = Field(gt=0)
    close: float = Field(gt=0)
    volume: float = Field(ge=0)
    market_cap: float = Field(ge=0)

    @model_validator(mode="after")
    def _check_range(self) -> "Candle":
        if self.low > min(self.open, self.close):
            raise ValueError(f"low {self.low} exceeds min(open, close)")
        if self.high < max(self.open, self.close):
            raise ValueError(f"high {self.high} below max(open, close)")
        return self


class OnChainDaily(_Record):
    """Network activity for one asset and day."""

    asset: Asset
    date: dt.date
    tx_count: int = Field(ge=0)
    active_wallets: int = Field(ge=0)
    value_transferred_usd: float = Field(ge=0, alias="value_usd")
    gas_price_mean_gwei: float = Field(ge=0, alias="gas_mean_gwei")
    gas_price_median_gwei: float = Field(ge=0, alias="gas_median_gwei")
    gas_consumed: int = Field(ge=0, alias="gas_used")


class NewsArticle(_Record):
    """A news item; its SimHash is derived from headline and body."""

    id: str
    timestamp: dt.datetime = Field(alias="ts")
    publisher: str
    url: str
    headline: str = Field(min_length=1)
    body: str = ""

    @field_validator("timestamp")
    @classmethod
    def _as_utc(cls, value: dt.datetime) -> dt.datetime:
        if value.tzinfo is None:
            return value.replace(tzinfo=dt.UTC)
        return value.astimezone(dt.UTC)

    @field_validator("headline")
    @classmethod
    def _non_blank(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("headline must be non-empty")
        return value

    @property
    def simhash(self) -> int:
        return simhash64(f"{self.headline}\n{self.body}")


class SentimentSnapshot(_Record):
    """Frozen sentiment-model output for one day."""

    date: dt.date
    vector: tuple[float, ...]

    @field_validator("vector")
    @classmethod
    def _finite(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not value:
            raise ValueError("sentiment vector must be non-empty")
        if not all(math.isfinite(v) for v in value):
            raise ValueError("sentiment vector entries must be finite")
        return value


class RegimeLabel(StrEnum):
    BULL = "bull"
    SIDEWAYS = "sideways"
    BEAR = "bear"


class RegimeWindow(_Record):
    """A dated evaluation interval; the label is taken as given, never inferred."""

    asset: Asset
    label: RegimeLabel
    start: dt.date
    end: dt.date
    open_price: float = Field(gt=0, alias="open")
    close_price: float = Field(gt=0, alias="close")

    @model_validator(mode="after")
    def _ordered(self) -> "RegimeWindow":
        if self.start >= self.end:
            raise ValueError(f"window start {self.start} must precede end {self.end}")
        return self

    @property
    def trend_pct(self) -> float:
        return regime_trend(self.open_price, self.close_price)

    @property
    def key(self) -> str:
        return f"{self.asset}:{self.label}"

    def days(self) -> list[dt.date]:
        n = (self.end - self.start).days
        return [self.start + dt.timedelta(days=i) for i in range(n + 1)]


class PromptContext(_Record):
    """The fused per-day actor input."""

    date: dt.date
    onchain: dict[Asset, OnChainDaily]
    candles: dict[Asset, Candle]
    news_digest: list[str]
    sentiment: SentimentSnapshot

    @model_validator(mode="after")
    def _all_assets(self) -> "PromptContext":
        for asset in ASSETS:
            if asset not in self.candles or asset not in self.onchain:
                raise ValueError(f"context for {self.date} is missing {asset}")
        return self


# ============================================================================
# Loading
# ============================================================================

R = TypeVar("R", bound=BaseModel)

_PARSE_ERRORS = ("_parsing", "_type", "missing")


def _validation_failure(e: ValidationError, path: Path, line: int, row: dict[str, Any]) -> Exception:
    first = e.errors()[0]
    loc = ".".join(str(p) for p in first["loc"]) or "row"
    detail = f"{loc}: {first['msg']}"
    if any(first["type"].endswith(suffix) for suffix in _PARSE_ERRORS):
        return InputError(f"cannot parse {detail}", origin=ORIGIN, path=str(path), line=line)
    return InvariantError(f"{path}:{line}: row {row} violates invariant ({detail})", origin=ORIGIN)


def _read_csv_records(path: Path, model: type[R], columns: Sequence[str] | None) -> list[R]:
    if not path.exists():
        raise InputError("file not found", origin=ORIGIN, path=str(path))
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        return []
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise InputError(f"cannot parse CSV ({e})", origin=ORIGIN, path=str(path)) from e

    header = [c.strip() for c in df.columns]
    if columns is not None and header != list(columns):
        raise InputError(
            f"expected header {','.join(columns)}, got {','.join(header)}",
            origin=ORIGIN,
            path=str(path),
            line=1,
        )
    df.columns = header

    records: list[R] = []
    for i, row in enumerate(df.to_dict("records")):
        line = i + 2
        try:
            records.append(model.model_validate(row))
        except ValidationError as e:
            raise _validation_failure(e, path, line, row) from e
    return records


def _check_increasing(records: Sequence[Candle] | Sequence[OnChainDaily], path: Path) -> None:
    seen: dict[Asset, dt.date] = {}
    for rec in records:
        prev = seen.get(rec.asset)
        if prev is not None and rec.date <= prev:
            raise InvariantError(
                f"{path}: duplicate or non-increasing date {rec.date} for {rec.asset}",
                origin=ORIGIN,
            )
        seen[rec.asset] = rec.date


def load_candles(path: Path) -> list[Candle]:
    """Load candles.csv, sorted by (asset, date)."""
    records = sorted(
        _read_csv_records(path, Candle, CANDLE_COLUMNS), key=lambda c: (c.asset, c.date)
    )
    _check_increasing(records, path)
    logger.info("Loaded %d candles from %s", len(records), path)
    return records


def load_onchain(path: Path) -> list[OnChainDaily]:
    """Load onchain.csv, one record per (asset, date)."""
    records = sorted(
        _read_csv_records(path, OnChainDaily, ONCHAIN_COLUMNS), key=lambda r: (r.asset, r.date)
    )
    _check_increasing(records, path)
    logger.info("Loaded %d on-chain records from %s", len(records), path)
    return records


def load_news(path: Path) -> list[NewsArticle]:
    """Load news.jsonl, sorted by (timestamp, id)."""
    if not path.exists():
        raise InputError("file not found", origin=ORIGIN, path=str(path))
    articles: list[NewsArticle] = []
    with path.open(encoding="utf-8") as f:
        for line, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                data = json.loads(raw)
            except json.JSONDecodeError as e:
                raise InputError(f"invalid JSON ({e.msg})", origin=ORIGIN, path=str(path), line=line) from e
            try:
                articles.append(NewsArticle.model_validate(data))
            except ValidationError as e:
                raise _validation_failure(e, path, line, data) from e
    articles.sort(key=lambda a: (a.timestamp, a.id))
    logger.info("Loaded %d articles from %s", len(articles), path)
    return articles


def load_sentiment(path: Path, dim: int | None = None) -> list[SentimentSnapshot]:
    """Load sentiment.csv (``date,v0..v{D-1}``), sorted by date."""
    if not path.exists():
        raise InputError("file not found", origin=ORIGIN, path=str(path))
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        return []
    except pd.errors.ParserError as e:
        raise InputError(f"cannot parse CSV ({e})", origin=ORIGIN, path=str(path)) from e

    header = [c.strip() for c in df.columns]
    expected = ["date"] + [f"v{i}" for i in range(len(header) - 1)]
    if header != expected or len(header) < 2:
        raise InputError("expected header date,v0,...,v{D-1}", origin=ORIGIN, path=str(path), line=1)
    if dim is not None and len(header) - 1 != dim:
        raise InvariantError(
            f"{path}: sentiment dimension {len(header) - 1} != configured {dim}", origin=ORIGIN
        )

    snapshots: list[SentimentSnapshot] = []
    for i, row in enumerate(df.itertuples(index=False, name=None)):
        record = {"date": row[0], "vector": list(row[1:])}
        try:
            snapshots.append(SentimentSnapshot.model_validate(record))
        except ValidationError as e:
            raise _validation_failure(e, path, i + 2, record) from e
    snapshots.sort(key=lambda s: s.date)
    for a, b in zip(snapshots, snapshots[1:]):
        if a.date == b.date:
            raise InvariantError(f"{path}: duplicate sentiment date {a.date}", origin=ORIGIN)
    return snapshots


def load_regimes(path: Path | None = None) -> list[RegimeWindow]:
    """Load regimes.csv; without a path, the bundled regime table."""
    if path is None:
        with resources.as_file(resources.files("cryptojudge") / "data" / "regimes.csv") as p:
            return _read_csv_records(p, RegimeWindow, REGIME_COLUMNS)
    return _read_csv_records(path, RegimeWindow, REGIME_COLUMNS)


def table1_regimes() -> list[RegimeWindow]:
    """The nine bundled BTC/ETH/SOL bull/sideways/bear test windows."""
    return load_regimes(None)


def find_window(windows: Iterable[RegimeWindow], key: str) -> RegimeWindow:
    """Resolve an ``ASSET:label`` selector."""
    asset, _, label = key.partition(":")
    for window in windows:
        if window.asset == asset.upper() and window.label == label.lower():
            return window
    raise InputError(f"no regime window matches {key!r}", origin=ORIGIN)


def regime_trend(open_price: float, close_price: float) -> float:
    """Percent change from open to close."""
    if open_price <= 0:
        raise InvariantError(f"open price must be positive, got {open_price}", origin=ORIGIN)
    return 100.0 * (close_price / open_price - 1.0)


# ============================================================================
# Sources and corpus
# ============================================================================


class MarketDataSource(Protocol):
    """Adapter for one provider set; live API clients implement the same calls."""

    def fetch_candles(self) -> list[Candle]: ...

    def fetch_onchain(self) -> list[OnChainDaily]: ...

    def fetch_news(self) -> list[NewsArticle]: ...

    def fetch_sentiment(self) -> list[SentimentSnapshot]: ...


@dataclass(frozen=True)
class FixtureSource:
    """Reads the standard fixture files from one directory."""

    data_dir: Path
    sentiment_dim: int | None = None

    def fetch_candles(self) -> list[Candle]:
        return load_candles(self.data_dir / FIXTURE_FILES["candles"])

    def fetch_onchain(self) -> list[OnChainDaily]:
        return load_onchain(self.data_dir / FIXTURE_FILES["onchain"])

    def fetch_news(self) -> list[NewsArticle]:
        return load_news(self.data_dir / FIXTURE_FILES["news"])

    def fetch_sentiment(self) -> list[SentimentSnapshot]:
        return load_sentiment(self.data_dir / FIXTURE_FILES["sentiment"], self.sentiment_dim)


@dataclass(frozen=True)
class CorpusSource:
    """Serves the streams of an already-built corpus, e.g. a synthetic one."""

    corpus: "MarketCorpus"

    def fetch_candles(self) -> list[Candle]:
        return list(self.corpus.candles.values())

    def fetch_onchain(self) -> list[OnChainDaily]:
        return list(self.corpus.onchain.values())

    def fetch_news(self) -> list[NewsArticle]:
        return list(self.corpus.news)

    def fetch_sentiment(self) -> list[SentimentSnapshot]:
        return list(self.corpus.sentiment.values())


def _end_of_day(day: dt.date) -> dt.datetime:
    """First instant after ``day`` (exclusive bound)."""
    return dt.datetime.combine(day + dt.timedelta(days=1), dt.time.min, tzinfo=dt.UTC)


@dataclass(frozen=True)
class MarketCorpus:
    """Immutable loaded corpus; safe to share across worker threads."""

    candles: dict[tuple[Asset, dt.date], Candle] = field(default_factory=dict)
    onchain: dict[tuple[Asset, dt.date], OnChainDaily] = field(default_factory=dict)
    news: tuple[NewsArticle, ...] = ()
    sentiment: dict[dt.date, SentimentSnapshot] = field(default_factory=dict)

    @classmethod
    def from_records(
        cls,
        candles: Iterable[Candle],
        onchain: Iterable[OnChainDaily],
        news: Iterable[NewsArticle],
        sentiment: Iterable[SentimentSnapshot],
    ) -> "MarketCorpus":
        return cls(
            candles={(c.asset, c.date): c for c in candles},
            onchain={(r.asset, r.date): r for r in onchain},
            news=tuple(sorted(news, key=lambda a: (a.timestamp, a.id))),
            sentiment={s.date: s for s in sentiment},
        )

    def dates(self) -> list[dt.date]:
        """Days with candles for every asset, ascending."""
        per_asset = [{d for (a, d) in self.candles if a == asset} for asset in ASSETS]
        return sorted(set.intersection(*per_asset)) if per_asset else []

    def candle(self, asset: Asset, day: dt.date) -> Candle:
        try:
            return self.candles[(asset, day)]
        except KeyError:
            raise DataGapError(
                f"missing candle for ({asset}, {day})", origin=ORIGIN, asset=asset, day=day
            ) from None

    def onchain_for(self, asset: Asset, day: dt.date) -> OnChainDaily:
        try:
            return self.onchain[(asset, day)]
        except KeyError:
            raise DataGapError(
                f"missing on-chain record for ({asset}, {day})", origin=ORIGIN, asset=asset, day=day
            ) from None

    def sentiment_for(self, day: dt.date) -> SentimentSnapshot:
        try:
            return self.sentiment[day]
        except KeyError:
            raise DataGapError(
                f"missing sentiment snapshot for {day}", origin=ORIGIN, asset="*", day=day
            ) from None

    def closes(self, day: dt.date) -> dict[Asset, float]:
        return {asset: self.candle(asset, day).close for asset in ASSETS}

    def articles_until(self, day: dt.date, lookback_days: int = 1) -> list[NewsArticle]:
        """Articles published within ``lookback_days`` ending at the close of ``day``."""
        upper = _end_of_day(day)
        lower = _end_of_day(day - dt.timedelta(days=lookback_days))
        return [a for a in self.news if lower <= a.timestamp < upper]

    def article(self, article_id: str) -> NewsArticle:
        for a in self.news:
            if a.id == article_id:
                return a
        raise KeyError(article_id)


def filter_publishers(articles: Iterable[NewsArticle], allowlist: Sequence[str]) -> list[NewsArticle]:
    """Keep articles from allowlisted publishers; an empty allowlist keeps all."""
    if not allowlist:
        return list(articles)
    allowed = {p.casefold() for p in allowlist}
    return [a for a in articles if a.publisher.casefold() in allowed]


def load_corpus(source: MarketDataSource, config: DataConfig | None = None) -> MarketCorpus:
    """Fetch, filter, de-duplicate and freeze all streams from a source."""
    config = config or DataConfig()
    news = filter_publishers(source.fetch_news(), config.news_publishers)
    unique = dedup_news(news, config.max_hamming)
    if len(unique) < len(news):
        logger.info("Dropped %d near-duplicate articles", len(news) - len(unique))
    return MarketCorpus.from_records(
        candles=source.fetch_candles(),
        onchain=source.fetch_onchain(),
        news=unique,
        sentiment=source.fetch_sentiment(),
    )


def load_corpus_dir(data_dir: Path, config: DataConfig | None = None) -> MarketCorpus:
    config = config or DataConfig()
    return load_corpus(FixtureSource(data_dir, config.sentiment_dim), config)


def build_prompt_context(day: dt.date, corpus: MarketCorpus, lookback_days: int = 1) -> PromptContext:
    """Fuse all streams for ``day``; news published after the close is never included."""
    candles = {asset: corpus.candle(asset, day) for asset in ASSETS}
    onchain = {asset: corpus.onchain_for(asset, day) for asset in ASSETS}
    sentiment = corpus.sentiment_for(day)
    digest = [a.id for a in corpus.articles_until(day, lookback_days)]
    return PromptContext(
        date=day, onchain=onchain, candles=candles, news_digest=digest, sentiment=sentiment
    )


# ============================================================================
# Writing (inverse of the loaders)
# ============================================================================


def _csv_text(rows: list[dict[str, Any]], columns: Sequence[str]) -> str:
    return pd.DataFrame(rows, columns=list(columns)).to_csv(index=False, lineterminator="\n")


def write_corpus(corpus: MarketCorpus, out_dir: Path) -> None:
    """Write the corpus back as the four stream fixtures."""
    out_dir.mkdir(parents=True, exist_ok=True)
    candles = sorted(corpus.candles.values(), key=lambda c: (c.asset, c.date))
    onchain = sorted(corpus.onchain.values(), key=lambda r: (r.asset, r.date))
    write_atomic(
        out_dir / FIXTURE_FILES["candles"],
        _csv_text([c.model_dump(mode="json") for c in candles], CANDLE_COLUMNS),
    )
    write_atomic(
        out_dir / FIXTURE_FILES["onchain"],
        _csv_text([r.model_dump(mode="json", by_alias=True) for r in onchain], ONCHAIN_COLUMNS),
    )
    write_atomic(
        out_dir / FIXTURE_FILES["news"],
        "".join(a.model_dump_json(by_alias=True) + "\n" for a in corpus.news),
    )
    snapshots = [corpus.sentiment[d] for d in sorted(corpus.sentiment)]
    dim = len(snapshots[0].vector) if snapshots else 0
    columns = ["date"] + [f"v{i}" for i in range(dim)]
    rows = [
        {"date": s.date.isoformat(), **{f"v{i}": v for i, v in enumerate(s.vector)}}
        for s in snapshots
    ]
    write_atomic(out_dir / FIXTURE_FILES["sentiment"], _csv_text(rows, columns))


def write_regimes(windows: Sequence[RegimeWindow], path: Path) -> None:
    rows = [w.model_dump(mode="json", by_alias=True) for w in windows]
    write_atomic(path, _csv_text(rows, REGIME_COLUMNS))
