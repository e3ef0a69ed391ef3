"""Candidate sources: where the actor's K daily proposals come from.

A real deployment would sample them from a language model; here they come
either from a fixture file or from a seeded generator.
"""

import datetime as dt
import logging
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import DataGapError, InvariantError
from .market_data import MarketCorpus
from .preference import Candidate, read_candidates
from .seeding import rng_for

logger = logging.getLogger(__name__)

ORIGIN = "preference"


class CandidateSource(Protocol):
    def candidates_for(self, day: dt.date, corpus: MarketCorpus) -> list[Candidate]: ...


@dataclass
class FixtureCandidateSource:
    """Serves candidates recorded in a candidates.jsonl file."""

    path: Path
    _by_day: dict[dt.date, list[Candidate]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        grouped: dict[dt.date, list[Candidate]] = defaultdict(list)
        for cand in read_candidates(self.path):
            grouped[cand.day].append(cand)
        self._by_day = dict(grouped)
        logger.info("Loaded candidates for %d days from %s", len(self._by_day), self.path)

    def days(self) -> list[dt.date]:
        return sorted(self._by_day)

    def candidates_for(self, day: dt.date, corpus: MarketCorpus) -> list[Candidate]:
        try:
            return list(self._by_day[day])
        except KeyError:
            raise DataGapError(f"no candidates for {day} in {self.path}", origin=ORIGIN, asset="*", day=day) from None


@dataclass(frozen=True)
class SyntheticCandidateSource:
    """Seeded stand-in for actor sampling.

    Every day includes a full-long (alpha = +1) and a full-reduce (alpha = -1)
    candidate; the rest draw alpha uniformly. A rationale points along
    ``alpha * sentiment`` plus noise, so confident calls agree or disagree
    with the day's mood by construction.
    """

    seed: int = 0
    k: int = 4
    min_length: int = 20
    max_length: int = 200
    rationale_noise: float = 0.5

    def __post_init__(self) -> None:
        if self.k < 2:
            raise InvariantError(f"k must be >= 2, got {self.k}", origin=ORIGIN)
        if not 1 <= self.min_length <= self.max_length:
            raise InvariantError("need 1 <= min_length <= max_length", origin=ORIGIN)

    def candidates_for(self, day: dt.date, corpus: MarketCorpus) -> list[Candidate]:
        rng = rng_for(self.seed, f"candidates.{day.isoformat()}")
        sentiment = np.asarray(corpus.sentiment_for(day).vector, dtype=float)
        direction = sentiment / (np.linalg.norm(sentiment) or 1.0)
        alphas = [1.0, -1.0] + [float(a) for a in rng.uniform(-1.0, 1.0, self.k - 2)]
        out: list[Candidate] = []
        for i, alpha in enumerate(alphas):
            rationale = alpha * direction + self.rationale_noise * rng.standard_normal(direction.size)
            out.append(
                Candidate(
                    day=day,
                    id=f"{day:%Y%m%d}-c{i}",
                    alpha=alpha,
                    rationale_vec=tuple(float(v) for v in rationale),
                    length=int(rng.integers(self.min_length, self.max_length + 1)),
                )
            )
        return out


def generate_candidates(
    source: CandidateSource, days: Sequence[dt.date], corpus: MarketCorpus
) -> list[Candidate]:
    return [c for day in days for c in source.candidates_for(day, corpus)]
