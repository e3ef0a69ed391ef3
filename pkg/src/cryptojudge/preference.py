"""Preference-dataset construction.

For each day the actor proposes K candidates. A judge scores every candidate
N times; malformed evaluations are dropped and the rest averaged. Two kinds
of pairs come out of a day:

- actor pairs: the shortest top-tier candidate over the longest low-tier
  one (length-controlled tiering), plus the Elo-preferred pair
- judge pairs: the highest- and lowest-rated concise judgments under a
  Bradley-Terry fit of the day's win matrix, only on high-variance days

"No pair" is an ordinary outcome (``None``), never an exception.
"""

import datetime as dt
import json
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .artifacts import write_atomic
from .config import PreferenceConfig, RewardConfig
from .elo import EloFit, fit_elo_mle
from .errors import DegenerateError, InputError, InvariantError
from .market_data import MarketCorpus
from .rewards import RewardVector, compute_reward_vector

logger = logging.getLogger(__name__)

ORIGIN = "preference"

Judge = Callable[["Candidate"], float]


# ============================================================================
# Records
# ============================================================================


class Candidate(BaseModel):
    """One actor output for a day, with its judge evaluations once scored."""

    model_config = ConfigDict(frozen=True)

    day: dt.date
    id: str
    alpha: float = Field(ge=-1.0, le=1.0)
    rationale_vec: tuple[float, ...]
    length: int = Field(ge=1)
    raw_scores: tuple[float, ...] = ()
    mean_score: float | None = None
    rewards: RewardVector | None = None

    @property
    def valid(self) -> bool:
        return self.mean_score is not None


class TierPartition(BaseModel):
    model_config = ConfigDict(frozen=True)

    top_lo: float
    top_hi: float
    low_lo: float
    low_hi: float
    rho: float

    @property
    def tolerance(self) -> float:
        return 1e-12 * (self.top_hi - self.low_lo)

    def in_top(self, score: float) -> bool:
        return self.top_lo - self.tolerance <= score <= self.top_hi

    def in_low(self, score: float) -> bool:
        return self.low_lo <= score <= self.low_hi + self.tolerance


class ActorPair(BaseModel):
    model_config = ConfigDict(frozen=True)

    chosen: Candidate
    rejected: Candidate


class JudgmentRecord(BaseModel):
    """A scored judgment; ``evaluations`` are the raw scores behind it."""

    model_config = ConfigDict(frozen=True)

    id: str
    score_vector: RewardVector
    scalar_score: float = Field(allow_inf_nan=False)
    verbosity: int = Field(ge=1)
    evaluations: tuple[float, ...] = ()


class PairKind(StrEnum):
    ACTOR = "actor"
    JUDGE = "judge"


class PreferencePair(BaseModel):
    """One line of pairs.jsonl."""

    day: dt.date
    chosen_id: str
    rejected_id: str
    kind: PairKind

    @model_validator(mode="after")
    def _distinct(self) -> "PreferencePair":
        if self.chosen_id == self.rejected_id:
            raise ValueError("chosen and rejected must differ")
        return self


# ============================================================================
# Scoring
# ============================================================================


def score_candidates(
    judge: Judge,
    candidate: Candidate,
    n_eval: int,
    score_min: float = -math.inf,
    score_max: float = math.inf,
) -> Candidate:
    """Evaluate ``n_eval`` times, keep the well-formed scores and average them."""
    if n_eval < 1:
        raise InvariantError(f"n_eval must be >= 1, got {n_eval}", origin=ORIGIN)
    kept: list[float] = []
    for _ in range(n_eval):
        s = judge(candidate)
        if math.isfinite(s) and score_min <= s <= score_max:
            kept.append(float(s))
    if not kept:
        logger.debug("Candidate %s: all %d evaluations malformed", candidate.id, n_eval)
        return candidate.model_copy(update={"raw_scores": (), "mean_score": None})
    return candidate.model_copy(
        update={"raw_scores": tuple(kept), "mean_score": math.fsum(kept) / len(kept)}
    )


@dataclass
class RewardJudge:
    """Scores a candidate as the equal-weight mean of its reward channels.

    Each evaluation adds seeded Gaussian noise; with probability
    ``malformed_rate`` an evaluation comes back as NaN.
    """

    rng: np.random.Generator
    noise_sd: float = 0.05
    malformed_rate: float = 0.0

    def __call__(self, candidate: Candidate) -> float:
        if candidate.rewards is None:
            raise InvariantError(f"candidate {candidate.id} has no reward vector", origin=ORIGIN)
        noise = float(self.rng.normal(0.0, self.noise_sd)) if self.noise_sd > 0 else 0.0
        malformed = self.malformed_rate > 0 and float(self.rng.random()) < self.malformed_rate
        if malformed:
            return math.nan
        return candidate.rewards.mean() + noise


# ============================================================================
# Length-controlled tiering
# ============================================================================


def partition_tiers(scores: Sequence[float], rho: float) -> TierPartition:
    """Top tier [(1-rho) S_max + rho S_min, S_max], low tier [S_min, (1-rho) S_min + rho S_max]."""
    if not 0.0 <= rho <= 1.0:
        raise InvariantError(f"rho must be in [0, 1], got {rho}", origin=ORIGIN)
    if len(scores) == 0:
        raise DegenerateError("no scores to partition", origin=ORIGIN)
    s_max, s_min = max(scores), min(scores)
    if s_max == s_min:
        raise DegenerateError("all scores are equal", origin=ORIGIN)
    return TierPartition(
        top_lo=(1 - rho) * s_max + rho * s_min,
        top_hi=s_max,
        low_lo=s_min,
        low_hi=(1 - rho) * s_min + rho * s_max,
        rho=rho,
    )


def select_actor_pair(candidates: Sequence[Candidate], rho: float) -> ActorPair | None:
    """Shortest top-tier candidate over the longest low-tier one.

    Ties: chosen prefers higher score then lower id; rejected prefers lower
    score then lower id.
    """
    scored = [(c.mean_score, c) for c in candidates if c.mean_score is not None]
    if len({s for s, _ in scored}) < 2:
        return None
    tiers = partition_tiers([s for s, _ in scored], rho)
    top = [(s, c) for s, c in scored if tiers.in_top(s)]
    if not top:
        return None
    _, chosen = min(top, key=lambda sc: (sc[1].length, -sc[0], sc[1].id))
    low = [(s, c) for s, c in scored if tiers.in_low(s) and c.id != chosen.id]
    if not low:
        return None
    _, rejected = min(low, key=lambda sc: (-sc[1].length, sc[0], sc[1].id))
    return ActorPair(chosen=chosen, rejected=rejected)


# ============================================================================
# Judgments and the win matrix
# ============================================================================


def judgment_from(candidate: Candidate) -> JudgmentRecord:
    if candidate.mean_score is None or candidate.rewards is None:
        raise InvariantError(f"candidate {candidate.id} is not scored", origin=ORIGIN)
    return JudgmentRecord(
        id=candidate.id,
        score_vector=candidate.rewards,
        scalar_score=candidate.mean_score,
        verbosity=candidate.length,
        evaluations=candidate.raw_scores,
    )


def build_win_matrix(
    judgments: Sequence[JudgmentRecord],
    omega_1: float = 1.0,
    omega_2: float = 1.0,
    prior: float = 0.0,
) -> np.ndarray:
    """Pairwise wins over every cross-pair of raw evaluations.

    Evaluation i of judgment m meets evaluation j of judgment n with m shown
    first when i + j is even. A win adds ``omega_1`` when the winner was shown
    first and ``omega_2`` otherwise; ties add nothing. ``prior`` is a
    symmetric pseudo-count on every off-diagonal cell.
    """
    if abs(omega_1 + omega_2 - 2.0) > 1e-12:
        raise InvariantError("omega_1 + omega_2 must equal 2", origin=ORIGIN)
    m = len(judgments)
    B = np.zeros((m, m))
    for a in range(m):
        for b in range(a + 1, m):
            for i, sa in enumerate(judgments[a].evaluations):
                for j, sb in enumerate(judgments[b].evaluations):
                    if sa == sb:
                        continue
                    a_first = (i + j) % 2 == 0
                    if sa > sb:
                        B[a, b] += omega_1 if a_first else omega_2
                    else:
                        B[b, a] += omega_2 if a_first else omega_1
    if prior > 0:
        B += prior * (1.0 - np.eye(m))
    return B


def verbosity_cap(judgments: Sequence[JudgmentRecord], percentile: float = 95.0) -> float:
    return float(np.percentile([j.verbosity for j in judgments], percentile))


def select_judge_pair(
    judgments: Sequence[JudgmentRecord], ratings: Sequence[float], cap: float
) -> tuple[JudgmentRecord, JudgmentRecord] | None:
    """Highest- and lowest-rated judgments after dropping verbose ones."""
    if len(judgments) != len(ratings):
        raise InvariantError("one rating per judgment required", origin=ORIGIN)
    concise = [(r, j) for j, r in zip(judgments, ratings) if j.verbosity <= cap]
    if len(concise) < 2:
        return None
    best = min(concise, key=lambda rj: (-rj[0], rj[1].id))
    worst = min(concise, key=lambda rj: (rj[0], rj[1].id))
    if best[1].id == worst[1].id:
        return None
    return best[1], worst[1]


# ============================================================================
# Per-day datasets
# ============================================================================


@dataclass
class DayDataset:
    day: dt.date
    candidates: list[Candidate]
    sigma_t: float
    actor_pairs: list[ActorPair] = field(default_factory=list)
    judge_pairs: list[tuple[JudgmentRecord, JudgmentRecord]] = field(default_factory=list)
    elo: EloFit | None = None

    def pairs(self) -> list[PreferencePair]:
        out = [
            PreferencePair(day=self.day, chosen_id=p.chosen.id, rejected_id=p.rejected.id, kind=PairKind.ACTOR)
            for p in self.actor_pairs
        ]
        out += [
            PreferencePair(day=self.day, chosen_id=c.id, rejected_id=r.id, kind=PairKind.JUDGE)
            for c, r in self.judge_pairs
        ]
        return out


def attach_rewards(
    candidates: Sequence[Candidate], corpus: MarketCorpus, config: RewardConfig
) -> list[Candidate]:
    return [
        c.model_copy(
            update={"rewards": compute_reward_vector(c.alpha, c.rationale_vec, c.day, corpus, config)}
        )
        for c in candidates
    ]


def build_day_dataset(
    candidates: Sequence[Candidate],
    judge: Judge,
    config: PreferenceConfig,
    sigma_t: float,
    *,
    prior: float = 0.0,
) -> DayDataset:
    """Score one day's candidates and derive its actor and judge pairs.

    Candidates must already carry reward vectors (``attach_rewards``).
    """
    if not candidates:
        raise InvariantError("no candidates for this day", origin=ORIGIN)
    day = candidates[0].day
    scored = [
        score_candidates(judge, c, config.n_evals, config.score_min, config.score_max)
        for c in candidates
    ]
    data = DayDataset(day=day, candidates=scored, sigma_t=sigma_t)

    tier_pair = select_actor_pair(scored, config.rho)
    if tier_pair is not None:
        data.actor_pairs.append(tier_pair)

    judgments = [judgment_from(c) for c in scored if c.valid]
    if len(judgments) >= 2:
        try:
            B = build_win_matrix(judgments, config.omega_1, config.omega_2, prior)
            data.elo = fit_elo_mle(B)
        except DegenerateError as e:
            logger.debug("No Elo fit on %s: %s", day, e)

    if data.elo is not None:
        cap = verbosity_cap(judgments, config.verbosity_percentile)
        picked = select_judge_pair(judgments, list(data.elo.ratings), cap)
        if picked is not None:
            best, worst = picked
            by_id = {c.id: c for c in scored}
            elo_pair = ActorPair(chosen=by_id[best.id], rejected=by_id[worst.id])
            if tier_pair is None or (tier_pair.chosen.id, tier_pair.rejected.id) != (best.id, worst.id):
                data.actor_pairs.append(elo_pair)
            if sigma_t >= config.effective_variance_gate:
                data.judge_pairs.append(picked)

    if not data.actor_pairs:
        logger.warning("No actor pair on %s", day)
    logger.debug(
        "Day %s: %d actor pairs, %d judge pairs, sigma_t=%.4f",
        day,
        len(data.actor_pairs),
        len(data.judge_pairs),
        sigma_t,
    )
    return data


# ============================================================================
# Files
# ============================================================================


class _CandidateLine(BaseModel):
    model_config = ConfigDict(extra="forbid")

    day: dt.date
    id: str
    alpha: float
    rationale_vec: list[float]
    length: int


def read_candidates(path: Path) -> list[Candidate]:
    """Read candidates.jsonl (``day, id, alpha, rationale_vec, length``)."""
    if not path.exists():
        raise InputError("file not found", origin=ORIGIN, path=str(path))
    out: list[Candidate] = []
    seen: set[tuple[dt.date, str]] = set()
    with path.open(encoding="utf-8") as f:
        for line, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                rec = _CandidateLine.model_validate(json.loads(raw))
                cand = Candidate(
                    day=rec.day, id=rec.id, alpha=rec.alpha, rationale_vec=tuple(rec.rationale_vec), length=rec.length
                )
            except json.JSONDecodeError as e:
                raise InputError(f"invalid JSON ({e.msg})", origin=ORIGIN, path=str(path), line=line) from e
            except ValidationError as e:
                first = e.errors()[0]
                loc = ".".join(str(p) for p in first["loc"])
                raise InputError(f"{loc}: {first['msg']}", origin=ORIGIN, path=str(path), line=line) from e
            if (cand.day, cand.id) in seen:
                raise InvariantError(f"{path}:{line}: duplicate candidate id {cand.id} on {cand.day}", origin=ORIGIN)
            seen.add((cand.day, cand.id))
            out.append(cand)
    return out


def write_candidates(candidates: Sequence[Candidate], path: Path) -> Path:
    lines = [
        _CandidateLine(
            day=c.day, id=c.id, alpha=c.alpha, rationale_vec=list(c.rationale_vec), length=c.length
        ).model_dump_json()
        for c in candidates
    ]
    return write_atomic(path, "".join(line + "\n" for line in lines))


def write_pairs(pairs: Sequence[PreferencePair], path: Path) -> Path:
    return write_atomic(path, "".join(p.model_dump_json() + "\n" for p in pairs))


def read_pairs(path: Path) -> list[PreferencePair]:
    if not path.exists():
        raise InputError("file not found", origin=ORIGIN, path=str(path))
    out: list[PreferencePair] = []
    for line, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            out.append(PreferencePair.model_validate_json(raw))
        except ValidationError as e:
            raise InputError(f"invalid pair record ({e.errors()[0]['msg']})", origin=ORIGIN, path=str(path), line=line) from e
    return out
