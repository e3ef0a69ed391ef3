"""Portfolio performance metrics computed from daily log-returns."""

import math
from collections.abc import Sequence

import numpy as np

from .errors import DegenerateError, InvariantError

ORIGIN = "backtest"


def total_return(w_start: float, w_end: float) -> float:
    """(w_end - w_start) / w_start."""
    if w_start <= 0:
        raise InvariantError(f"w_start must be positive, got {w_start}", origin=ORIGIN)
    return (w_end - w_start) / w_start


def log_returns(wealth: Sequence[float]) -> np.ndarray:
    """Daily log-returns of a positive wealth series."""
    w = np.asarray(wealth, dtype=float)
    if np.any(w <= 0):
        raise InvariantError("wealth series must be positive", origin=ORIGIN)
    return np.diff(np.log(w))


def daily_mean(returns: Sequence[float]) -> float:
    if len(returns) == 0:
        raise InvariantError("daily_mean of an empty series", origin=ORIGIN)
    return math.fsum(returns) / len(returns)


def sharpe(returns: Sequence[float]) -> float:
    """Raw daily Sharpe ratio with r_f = 0 and the sample (n - 1) deviation."""
    if len(returns) < 2:
        raise InvariantError("sharpe needs at least two returns", origin=ORIGIN)
    r = np.asarray(returns, dtype=float)
    sd = float(np.std(r, ddof=1))
    if sd <= 1e-15 * max(1.0, float(np.max(np.abs(r)))):
        raise DegenerateError("zero variance in return series", origin=ORIGIN)
    return daily_mean(returns) / sd


def max_drawdown(series: Sequence[float]) -> float:
    """Largest peak-to-trough decline as a fraction of the peak."""
    w = np.asarray(series, dtype=float)
    if w.size == 0:
        raise InvariantError("max_drawdown of an empty series", origin=ORIGIN)
    if np.any(w <= 0):
        raise InvariantError("series values must be positive", origin=ORIGIN)
    peaks = np.maximum.accumulate(w)
    return float(np.max((peaks - w) / peaks))
