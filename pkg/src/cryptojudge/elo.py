"""Elo ratings: the online dynamic-K update and the Bradley-Terry MLE fit.

The two use different scales. ``elo_update`` works on the familiar 400-point
scale; ``fit_elo_mle`` returns natural-logistic ratings, convertible for
display with ``to_display`` (x 400 / ln 10).
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import expit, log_expit

from .errors import DegenerateError, InvariantError

logger = logging.getLogger(__name__)

ORIGIN = "preference"

DISPLAY_SCALE = 400.0 / math.log(10.0)
MLE_STEP = 0.1
MLE_TOL = 1e-8
MLE_MAX_ITER = 10_000


def elo_dynamic_k(k_base: float, sigma_t: float, sigma_max: float) -> float:
    """K_t = k_base * (1 + min(sigma_t, sigma_max) / sigma_max)."""
    if sigma_max <= 0:
        raise InvariantError(f"sigma_max must be positive, got {sigma_max}", origin=ORIGIN)
    if sigma_t < 0:
        raise InvariantError(f"sigma_t must be non-negative, got {sigma_t}", origin=ORIGIN)
    return k_base * (1.0 + min(sigma_t, sigma_max) / sigma_max)


def elo_expected(s_model: float, s_opponent: float) -> float:
    return 1.0 / (1.0 + 10.0 ** ((s_opponent - s_model) / 400.0))


def elo_update(s_model: float, s_opponent: float, k: float, model_beat_market: bool) -> float:
    """Rating change for the model after one comparison with the market."""
    if k <= 0:
        raise InvariantError(f"k must be positive, got {k}", origin=ORIGIN)
    return k * (float(model_beat_market) - elo_expected(s_model, s_opponent))


@dataclass
class OnlineElo:
    """Running rating of the actor's chosen forecast against buy-and-hold.

    Only the model's rating moves; the market benchmark stays at its
    initial rating.
    """

    k_base: float = 32.0
    sigma_max: float = 0.04
    initial_rating: float = 1500.0
    rating: float = field(init=False)
    history: list[float] = field(default_factory=list, init=False)

    def __post_init__(self) -> None:
        self.rating = self.initial_rating

    def update(self, model_return: float, market_return: float, sigma_t: float) -> float:
        k = elo_dynamic_k(self.k_base, sigma_t, self.sigma_max)
        delta = elo_update(self.rating, self.initial_rating, k, model_return > market_return)
        self.rating += delta
        self.history.append(self.rating)
        return delta


# ============================================================================
# Maximum likelihood
# ============================================================================


@dataclass(frozen=True)
class EloFit:
    """Natural-logistic ratings summing to zero."""

    ratings: np.ndarray
    iterations: int
    converged: bool

    def display(self, base: float = 1500.0) -> np.ndarray:
        return to_display(self.ratings, base)

    @property
    def spread(self) -> float:
        return float(self.ratings.max() - self.ratings.min()) if self.ratings.size else 0.0


def to_display(ratings: np.ndarray, base: float = 1500.0) -> np.ndarray:
    return base + DISPLAY_SCALE * np.asarray(ratings, dtype=float)


def log_likelihood(B: np.ndarray, ratings: np.ndarray) -> float:
    """Sum over m, n of B_mn * log sigma(e_m - e_n)."""
    diff = ratings[:, None] - ratings[None, :]
    return float(np.sum(B * log_expit(diff)))


def _validate(B: np.ndarray) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise InvariantError(f"win matrix must be square, got shape {B.shape}", origin=ORIGIN)
    if np.any(B < 0) or not np.all(np.isfinite(B)):
        raise InvariantError("win matrix entries must be finite and non-negative", origin=ORIGIN)
    if np.any(np.diag(B) != 0):
        raise InvariantError("win matrix diagonal must be zero", origin=ORIGIN)
    if B.sum() == 0:
        raise DegenerateError("win matrix is all zero", origin=ORIGIN)
    return B


def is_connected(B: np.ndarray) -> bool:
    n_components, _ = connected_components(csr_matrix((B + B.T) > 0), directed=False)
    return n_components == 1


def fit_elo_mle(B: np.ndarray, *, step: float = MLE_STEP, tol: float = MLE_TOL, max_iter: int = MLE_MAX_ITER) -> EloFit:
    """Gradient ascent on the Bradley-Terry log-likelihood.

    The objective is divided by the largest per-item comparison weight so the
    fixed step stays stable for any evidence volume. Stops when that scaled
    gradient's infinity-norm drops below ``tol`` or after ``max_iter`` steps;
    ratings are re-centred to sum to zero.
    """
    B = _validate(B)
    if not is_connected(B):
        raise DegenerateError("comparison graph is disconnected", origin=ORIGIN)

    scaled = B / float(np.max(B.sum(axis=0) + B.sum(axis=1)))
    ratings = np.zeros(B.shape[0])
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        p = expit(ratings[:, None] - ratings[None, :])
        grad = (scaled * (1.0 - p)).sum(axis=1) - (scaled.T * p).sum(axis=1)
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        ratings = ratings + step * grad
        ratings -= ratings.mean()

    if not converged:
        logger.warning("Elo MLE did not converge in %d iterations", max_iter)
    return EloFit(ratings=ratings - ratings.mean(), iterations=iterations, converged=converged)
