"""Inter-rater agreement: Kendall's W, Krippendorff's alpha and Likert summaries.

Ratings matrices are raters x items; ``NaN`` marks a missing rating, which
only Krippendorff's alpha accepts.
"""

import logging
import math
from collections.abc import Mapping, Sequence
from enum import StrEnum
from pathlib import Path

import krippendorff
import numpy as np
import pandas as pd
from pydantic import BaseModel
from scipy.stats import rankdata

from .errors import DegenerateError, InputError, InvariantError

logger = logging.getLogger(__name__)

ORIGIN = "evaluation"

RATING_COLUMNS = ["rater", "item", "dimension", "score"]
DEFAULT_DIMENSIONS = ("soundness", "consistency", "completeness", "relevance")


class Metric(StrEnum):
    NOMINAL = "nominal"
    ORDINAL = "ordinal"
    INTERVAL = "interval"
    RATIO = "ratio"


def _matrix(ratings: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    values = np.asarray(ratings, dtype=float)
    if values.ndim != 2:
        raise InvariantError(f"ratings must be a 2-D matrix, got shape {values.shape}", origin=ORIGIN)
    m, n = values.shape
    if m < 2 or n < 2:
        raise InvariantError(f"need at least 2 raters and 2 items, got {m} x {n}", origin=ORIGIN)
    return values


def kendalls_w(ratings: Sequence[Sequence[float]] | np.ndarray) -> float:
    """Coefficient of concordance with mid-rank ties and the standard tie correction."""
    values = _matrix(ratings)
    if np.isnan(values).any():
        raise InvariantError("Kendall's W needs a complete matrix", origin=ORIGIN)
    m, n = values.shape
    ranks = np.vstack([rankdata(row, method="average") for row in values])
    totals = ranks.sum(axis=0)
    s = float(np.sum((totals - totals.mean()) ** 2))
    tie_correction = 0.0
    for row in values:
        _, counts = np.unique(row, return_counts=True)
        tie_correction += float(np.sum(counts.astype(float) ** 3 - counts))
    denominator = m**2 * (n**3 - n) - m * tie_correction
    if denominator <= 0:
        raise DegenerateError("every rater tied every item", origin=ORIGIN)
    return 12.0 * s / denominator


def krippendorff_alpha(
    ratings: Sequence[Sequence[float]] | np.ndarray, metric: Metric | str = Metric.ORDINAL
) -> float:
    """Coincidence-matrix alpha for the chosen level of measurement."""
    values = np.asarray(ratings, dtype=float)
    if values.ndim != 2:
        raise InvariantError(f"ratings must be a 2-D matrix, got shape {values.shape}", origin=ORIGIN)
    metric = Metric(metric)
    pairable = int(np.sum(np.sum(~np.isnan(values), axis=0) >= 2))
    if pairable == 0:
        raise DegenerateError("no item has two or more ratings", origin=ORIGIN)
    observed = values[~np.isnan(values)]
    if np.unique(observed).size < 2:
        raise DegenerateError("a single value everywhere leaves no expected disagreement", origin=ORIGIN)
    return float(krippendorff.alpha(reliability_data=values, level_of_measurement=metric.value))


class LikertSummary(BaseModel):
    mean: float
    sd: float | None
    n: int

    @property
    def formatted(self) -> str:
        if self.sd is None:
            return f"{self.mean:.1f} ± n/a"
        return f"{self.mean:.1f} ± {round(self.sd, 2)}"


def aggregate_likert(scores: Mapping[str, Sequence[float]]) -> dict[str, LikertSummary]:
    """Per-dimension mean and sample standard deviation (undefined for one score)."""
    if not scores:
        raise InvariantError("no dimensions to aggregate", origin=ORIGIN)
    out: dict[str, LikertSummary] = {}
    for dimension, values in scores.items():
        if len(values) == 0:
            raise InvariantError(f"dimension {dimension!r} has no scores", origin=ORIGIN)
        arr = np.asarray(values, dtype=float)
        sd = float(np.std(arr, ddof=1)) if arr.size > 1 else None
        out[dimension] = LikertSummary(mean=float(arr.mean()), sd=sd, n=int(arr.size))
    return out


# ============================================================================
# ratings.csv
# ============================================================================


def load_ratings(path: Path) -> pd.DataFrame:
    """Read ``rater,item,dimension,score`` rows."""
    if not path.exists():
        raise InputError("file not found", origin=ORIGIN, path=str(path))
    try:
        df = pd.read_csv(path, dtype={"rater": str, "item": str, "dimension": str}, encoding="utf-8")
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=RATING_COLUMNS)
    except pd.errors.ParserError as e:
        raise InputError(f"cannot parse CSV ({e})", origin=ORIGIN, path=str(path)) from e
    if list(df.columns) != RATING_COLUMNS:
        raise InputError(f"expected header {','.join(RATING_COLUMNS)}", origin=ORIGIN, path=str(path), line=1)
    scores = pd.to_numeric(df["score"], errors="coerce")
    bad = scores.isna() | ~np.isfinite(scores.fillna(0))
    if bad.any():
        line = int(np.flatnonzero(bad.to_numpy())[0]) + 2
        raise InputError("score must be a finite number", origin=ORIGIN, path=str(path), line=line)
    df["score"] = scores.astype(float)
    dup = df.duplicated(subset=["rater", "item", "dimension"])
    if dup.any():
        line = int(np.flatnonzero(dup.to_numpy())[0]) + 2
        raise InvariantError(f"{path}:{line}: duplicate (rater, item, dimension)", origin=ORIGIN)
    return df


def ratings_matrix(df: pd.DataFrame, dimension: str) -> np.ndarray:
    """Raters x items for one dimension, sorted by rater then item; NaN where missing."""
    sub = df[df["dimension"] == dimension]
    table = sub.pivot(index="rater", columns="item", values="score").sort_index().sort_index(axis=1)
    return table.to_numpy(dtype=float)


class DimensionAgreement(BaseModel):
    dimension: str
    raters: int
    items: int
    kendalls_w: float | None
    krippendorff_alpha: float | None
    likert: str
    notes: list[str] = []


class AgreementReport(BaseModel):
    metric: Metric
    dimensions: list[DimensionAgreement]


def agreement_report(df: pd.DataFrame, metric: Metric | str = Metric.ORDINAL) -> AgreementReport:
    """Agreement statistics for every dimension present in the ratings."""
    metric = Metric(metric)
    present = list(dict.fromkeys(df["dimension"]))
    ordered = [d for d in DEFAULT_DIMENSIONS if d in present] + [d for d in present if d not in DEFAULT_DIMENSIONS]
    rows: list[DimensionAgreement] = []
    for dimension in ordered:
        values = ratings_matrix(df, dimension)
        notes: list[str] = []
        w: float | None = None
        alpha: float | None = None
        try:
            w = kendalls_w(values)
        except (InvariantError, DegenerateError) as e:
            notes.append(f"kendalls_w: {e.message}")
        try:
            alpha = krippendorff_alpha(values, metric)
        except (InvariantError, DegenerateError) as e:
            notes.append(f"krippendorff_alpha: {e.message}")
        for note in notes:
            logger.warning("%s: %s", dimension, note)
        flat = values[~np.isnan(values)]
        likert = aggregate_likert({dimension: list(flat)})[dimension]
        rows.append(
            DimensionAgreement(
                dimension=dimension,
                raters=values.shape[0],
                items=values.shape[1],
                kendalls_w=w,
                krippendorff_alpha=alpha,
                likert=likert.formatted,
                notes=notes,
            )
        )
    return AgreementReport(metric=metric, dimensions=rows)


def format_likert_table(report: AgreementReport) -> list[tuple[str, str, str, str]]:
    def fmt(x: float | None) -> str:
        return "n/a" if x is None or math.isnan(x) else f"{x:.3f}"

    return [(d.dimension, d.likert, fmt(d.kendalls_w), fmt(d.krippendorff_alpha)) for d in report.dimensions]
