"""cryptojudge: market-data rewards, backtesting and judge-driven preference training for BTC/ETH/SOL."""

__version__ = "0.1.0"
