"""Shared fixtures: the hand-written mini corpus and a seeded synthetic one."""

import datetime as dt
from pathlib import Path

import pytest

from cryptojudge.config import DataConfig, RunConfig
from cryptojudge.market_data import CorpusSource, MarketCorpus, load_corpus, load_corpus_dir
from cryptojudge.synthetic import generate_corpus

FIXTURES = Path(__file__).parent / "fixtures"
MINI = FIXTURES / "mini"

D1, D2, D3, D4 = (dt.date(2025, 1, d) for d in (1, 2, 3, 4))


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def mini_dir() -> Path:
    """Four days of BTC/ETH/SOL data with a wire repeat and a future article."""
    return MINI


@pytest.fixture
def mini_corpus() -> MarketCorpus:
    return load_corpus_dir(MINI, DataConfig(sentiment_dim=3))


@pytest.fixture
def synthetic_corpus() -> MarketCorpus:
    """30 de-duplicated synthetic days starting 2025-04-08."""
    raw = generate_corpus(dt.date(2025, 4, 8), 30, seed=7, drift=0.002, vol=0.02)
    return load_corpus(CorpusSource(raw), DataConfig())


@pytest.fixture
def run_config() -> RunConfig:
    return RunConfig()
