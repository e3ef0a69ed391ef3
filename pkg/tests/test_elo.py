"""Tests for the online Elo update and the Bradley-Terry MLE fit."""

import math

import numpy as np
import pytest
from scipy.special import log_expit

from cryptojudge.elo import (
    DISPLAY_SCALE,
    OnlineElo,
    elo_dynamic_k,
    elo_update,
    fit_elo_mle,
    is_connected,
    log_likelihood,
    to_display,
)
from cryptojudge.errors import DegenerateError, InvariantError


class TestDynamicK:
    def test_calm_day_keeps_base(self):
        assert elo_dynamic_k(32, 0.0, 0.04) == 32

    def test_scales_with_volatility(self):
        """K grows linearly with sigma_t / sigma_max."""
        assert elo_dynamic_k(32, 0.01, 0.04) == pytest.approx(40)
        assert elo_dynamic_k(32, 0.04, 0.04) == pytest.approx(64)

    def test_capped_at_twice_base(self):
        assert elo_dynamic_k(32, 0.5, 0.04) == pytest.approx(64)

    @pytest.mark.parametrize("sigma_t,sigma_max", [(0.01, 0.0), (-0.01, 0.04)])
    def test_rejects_bad_inputs(self, sigma_t, sigma_max):
        with pytest.raises(InvariantError):
            elo_dynamic_k(32, sigma_t, sigma_max)


class TestEloUpdate:
    """Test the single-comparison rating change."""

    def test_even_match(self):
        """Equal ratings move by K / 2 either way."""
        assert elo_update(1500, 1500, 32, True) == pytest.approx(16)
        assert elo_update(1500, 1500, 32, False) == pytest.approx(-16)

    def test_favourite_gains_little(self):
        """A 200-point favourite gains about 7.7 for a win."""
        assert elo_update(1700, 1500, 32, True) == pytest.approx(7.69, abs=0.01)

    def test_win_minus_loss_is_k(self):
        """Outcome antisymmetry over 1,000 random rating pairs."""
        rng = np.random.default_rng(0)
        for _ in range(1000):
            s, o = rng.uniform(1000, 2000, size=2)
            k = float(rng.uniform(1, 64))
            assert elo_update(s, o, k, True) - elo_update(s, o, k, False) == pytest.approx(k)

    def test_non_positive_k(self):
        with pytest.raises(InvariantError):
            elo_update(1500, 1500, 0, True)


class TestOnlineElo:
    def test_tracks_history(self):
        """Ratings and per-day deltas are recorded in order."""
        elo = OnlineElo(k_base=32, sigma_max=0.04)
        assert elo.update(0.02, 0.01, 0.0) == pytest.approx(16)
        assert elo.rating == pytest.approx(1516)
        elo.update(0.0, 0.01, 0.04)
        assert len(elo.history) == 2
        assert elo.rating < 1516

    def test_equal_returns_count_as_loss(self):
        """A tie with the benchmark is not a win."""
        elo = OnlineElo()
        assert elo.update(0.01, 0.01, 0.0) < 0


class TestFitEloMle:
    """Test the maximum-likelihood ratings."""

    def test_two_items(self):
        """Rating gap equals the log odds; ratings sum to zero."""
        fit = fit_elo_mle(np.array([[0.0, 3.0], [1.0, 0.0]]))
        assert fit.converged
        assert fit.ratings[0] - fit.ratings[1] == pytest.approx(math.log(3), abs=1e-6)
        assert fit.ratings.sum() == pytest.approx(0.0, abs=1e-12)

    def test_symmetric_matrix_gives_zeros(self):
        """Balanced wins leave everyone at zero."""
        B = np.array([[0, 2, 2], [2, 0, 2], [2, 2, 0]], dtype=float)
        fit = fit_elo_mle(B)
        assert np.allclose(fit.ratings, 0.0, atol=1e-9)
        assert fit.spread == pytest.approx(0.0, abs=1e-9)

    def test_beats_random_ratings(self):
        """On 50 random 4-item matrices the fit beats 1,000 random rating vectors each."""
        rng = np.random.default_rng(11)
        for _ in range(50):
            B = rng.integers(0, 6, size=(4, 4)).astype(float)
            B += np.triu(rng.integers(1, 3, size=(4, 4)), k=1)
            np.fill_diagonal(B, 0.0)
            fit = fit_elo_mle(B)
            best = log_likelihood(B, fit.ratings)
            trials = rng.normal(0, 1.5, size=(1000, 4))
            trials -= trials.mean(axis=1, keepdims=True)
            diffs = trials[:, :, None] - trials[:, None, :]
            objectives = np.sum(B * log_expit(diffs), axis=(1, 2))
            assert np.all(objectives <= best + 1e-7)

    def test_two_items_follow_win_fraction(self):
        """expit of the gap recovers the empirical win fraction."""
        rng = np.random.default_rng(12)
        for _ in range(100):
            wins, losses = rng.integers(1, 20, size=2).astype(float)
            fit = fit_elo_mle(np.array([[0.0, wins], [losses, 0.0]]))
            gap = fit.ratings[0] - fit.ratings[1]
            assert gap == pytest.approx(math.log(wins / losses), abs=1e-3)

    def test_scale_of_evidence_does_not_matter(self):
        """Multiplying every count leaves the ratings unchanged."""
        B = np.array([[0.0, 3.0], [1.0, 0.0]])
        small = fit_elo_mle(B)
        big = fit_elo_mle(B * 1000)
        assert np.allclose(small.ratings, big.ratings, atol=1e-6)

    def test_disconnected(self):
        """Two islands cannot be placed on one scale."""
        B = np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=float)
        assert not is_connected(B)
        with pytest.raises(DegenerateError):
            fit_elo_mle(B)

    def test_all_zero(self):
        with pytest.raises(DegenerateError):
            fit_elo_mle(np.zeros((3, 3)))

    @pytest.mark.parametrize(
        "B",
        [
            np.zeros((2, 3)),
            np.array([[1.0, 1.0], [1.0, 0.0]]),
            np.array([[0.0, -1.0], [1.0, 0.0]]),
        ],
    )
    def test_malformed(self, B):
        with pytest.raises(InvariantError):
            fit_elo_mle(B)

    def test_display_scale(self):
        """Natural-log ratings map to the 400 / ln 10 display scale."""
        assert to_display(np.array([0.0, math.log(10)])).tolist() == pytest.approx([1500.0, 1900.0])
        assert DISPLAY_SCALE == pytest.approx(173.7178, abs=1e-4)
