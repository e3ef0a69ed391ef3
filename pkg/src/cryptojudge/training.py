"""Actor / judge / meta-judge optimisation loop.

One ``train_step`` runs in a fixed order:

1. aggregate judge-pair reward vectors to scalars with f_agg
2. descend L_meta on the meta-judge, and on f_agg through the chain rule
3. descend L_align on the judge against the (now frozen) meta-judge
4. descend L_actor on the actor over the step's preference pairs

All updates are plain gradient descent. Models are immutable; every step
returns new ones.
"""

import datetime as dt
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from pydantic import BaseModel
from scipy.special import expit

from .artifacts import ArtifactWriter
from .candidates import CandidateSource
from .config import ASSETS, RunConfig, TrainConfig
from .elo import OnlineElo
from .errors import DivergenceError, InvariantError
from .market_data import MarketCorpus
from .models import ActorPolicy, AggregatorParams, JudgeModel, MetaJudgeModel
from .preference import (
    Candidate,
    DayDataset,
    PreferencePair,
    RewardJudge,
    attach_rewards,
    build_day_dataset,
)
from .rewards import CHANNELS, ew_std, init_aggregator
from .seeding import rng_for

logger = logging.getLogger(__name__)

ORIGIN = "training"

METRIC_COLUMNS = ["iter", "l_meta", "l_align", "l_actor", "n_actor_pairs", "n_judge_pairs"]
N_CONTEXT_FEATURES = len(ASSETS) + 1


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


# ============================================================================
# Losses
# ============================================================================


def meta_judge_loss(
    meta: MetaJudgeModel, r1: np.ndarray | float, r2: np.ndarray | float
) -> tuple[float, np.ndarray]:
    """Mean of -log sigma(M_phi(r1, r2)) with r1 the preferred sample."""
    loss, grad, _, _ = meta_judge_loss_full(meta, r1, r2)
    return loss, grad


def meta_judge_loss_full(
    meta: MetaJudgeModel, r1: np.ndarray | float, r2: np.ndarray | float
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Loss plus gradients wrt phi, r1 and r2."""
    if not np.all(np.isfinite(meta.flat())):
        raise InvariantError("meta-judge parameters are not finite", origin=ORIGIN)
    r1 = np.atleast_1d(np.asarray(r1, dtype=float))
    r2 = np.atleast_1d(np.asarray(r2, dtype=float))
    n = r1.size
    z = meta.logits(r1, r2)
    loss = float(np.mean(_softplus(-z)))
    dz = -expit(-z) / n
    g_phi, g_r1, g_r2 = meta.backward(r1, r2, dz)
    return loss, g_phi, g_r1, g_r2


def align_loss(
    meta: MetaJudgeModel, judge: JudgeModel, r1: np.ndarray, r2: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean squared logit gap between meta-judge and judge; meta is a constant."""
    r1 = np.atleast_1d(np.asarray(r1, dtype=float))
    r2 = np.atleast_1d(np.asarray(r2, dtype=float))
    if r1.size == 0:
        raise InvariantError("align_loss needs a non-empty batch", origin=ORIGIN)
    gap = meta.logits(r1, r2) - judge.logits(r1, r2)
    loss = float(np.mean(gap**2))
    g_theta, _, _ = judge.backward(r1, r2, -2.0 * gap / r1.size)
    return loss, g_theta


def actor_loss(
    actor: ActorPolicy, x_chosen: np.ndarray, x_rejected: np.ndarray, beta: float
) -> tuple[float, np.ndarray]:
    """Mean softplus((pi(rejected) - pi(chosen)) / beta)."""
    if beta <= 0:
        raise InvariantError(f"beta must be positive, got {beta}", origin=ORIGIN)
    x_c = np.atleast_2d(np.asarray(x_chosen, dtype=float))
    x_r = np.atleast_2d(np.asarray(x_rejected, dtype=float))
    n = x_c.shape[0]
    margin = (actor.forward(x_r) - actor.forward(x_c)) / beta
    loss = float(np.mean(_softplus(margin)))
    d_margin = expit(margin) / (beta * n)
    g_c, _ = actor.backward(x_c, -d_margin)
    g_r, _ = actor.backward(x_r, d_margin)
    return loss, g_c + g_r


# ============================================================================
# Models and steps
# ============================================================================


@dataclass(frozen=True)
class Models:
    aggregator: AggregatorParams
    meta: MetaJudgeModel
    judge: JudgeModel
    actor: ActorPolicy

    @classmethod
    def init(cls, seed: int, actor_inputs: int, config: TrainConfig, aggregator_hidden: int = 8) -> "Models":
        return cls(
            aggregator=init_aggregator(rng_for(seed, "training.init.aggregator"), aggregator_hidden),
            meta=MetaJudgeModel.init(rng_for(seed, "training.init.meta"), config.judge_hidden),
            judge=JudgeModel.init(rng_for(seed, "training.init.judge"), config.judge_hidden),
            actor=ActorPolicy.init(rng_for(seed, "training.init.actor"), actor_inputs, config.actor_hidden),
        )

    def snapshot(self) -> dict[str, list[float]]:
        return {
            "aggregator": self.aggregator.flat().tolist(),
            "meta": self.meta.flat().tolist(),
            "judge": self.judge.flat().tolist(),
            "actor": self.actor.flat().tolist(),
        }


@dataclass
class TrainBatch:
    """Judge pairs as reward-vector rows (preferred first) and actor pairs as feature rows."""

    v_preferred: np.ndarray = field(default_factory=lambda: np.zeros((0, len(CHANNELS))))
    v_other: np.ndarray = field(default_factory=lambda: np.zeros((0, len(CHANNELS))))
    x_chosen: np.ndarray | None = None
    x_rejected: np.ndarray | None = None

    @property
    def n_judge_pairs(self) -> int:
        return self.v_preferred.shape[0]

    @property
    def n_actor_pairs(self) -> int:
        return 0 if self.x_chosen is None else self.x_chosen.shape[0]


class StepDiagnostics(BaseModel):
    l_meta: float
    l_align: float
    l_actor: float
    n_actor_pairs: int
    n_judge_pairs: int


def _guard(name: str, value: float, models: Models) -> None:
    if not math.isfinite(value):
        raise DivergenceError(f"{name} is not finite ({value})", origin=ORIGIN, snapshot=models.snapshot())


def train_step(models: Models, batch: TrainBatch, config: TrainConfig) -> tuple[Models, StepDiagnostics]:
    """One ordered update of all four models; empty pair sets cost 0 and skip their update."""
    l_meta = l_align = l_actor = 0.0
    agg, meta, judge, actor = models.aggregator, models.meta, models.judge, models.actor

    if batch.n_judge_pairs:
        r1 = agg.forward(batch.v_preferred)
        r2 = agg.forward(batch.v_other)
        l_meta, g_phi, g_r1, g_r2 = meta_judge_loss_full(meta, r1, r2)
        _guard("L_meta", l_meta, models)
        g_agg = agg.backward(batch.v_preferred, g_r1)[0] + agg.backward(batch.v_other, g_r2)[0]
        meta = meta.step(g_phi, config.lr_meta)
        agg = agg.step(g_agg, config.lr_agg)

        r1 = agg.forward(batch.v_preferred)
        r2 = agg.forward(batch.v_other)
        l_align, g_theta = align_loss(meta, judge, r1, r2)
        _guard("L_align", l_align, models)
        judge = judge.step(g_theta, config.lr_judge)

    if batch.n_actor_pairs:
        assert batch.x_chosen is not None and batch.x_rejected is not None
        l_actor, g_actor = actor_loss(actor, batch.x_chosen, batch.x_rejected, config.beta)
        _guard("L_actor", l_actor, models)
        actor = actor.step(g_actor, config.lr_actor)

    updated = Models(aggregator=agg, meta=meta, judge=judge, actor=actor)
    if not all(m.is_finite() for m in (agg, meta.scorer, judge.scorer, actor)):
        raise DivergenceError("parameters became non-finite", origin=ORIGIN, snapshot=models.snapshot())
    return updated, StepDiagnostics(
        l_meta=l_meta,
        l_align=l_align,
        l_actor=l_actor,
        n_actor_pairs=batch.n_actor_pairs,
        n_judge_pairs=batch.n_judge_pairs,
    )


# ============================================================================
# Features
# ============================================================================


def asset_log_returns(corpus: MarketCorpus, dates: Sequence[dt.date]) -> dict[str, list[float]]:
    return {
        a: [
            math.log(corpus.candle(a, d).close / corpus.candle(a, p).close)
            for p, d in zip(dates, dates[1:])
        ]
        for a in ASSETS
    }


@dataclass(frozen=True)
class DayContext:
    """Context features known before the day's close."""

    day: dt.date
    prev_returns: tuple[float, ...]
    sigma: float
    basket_return: float

    def vector(self) -> np.ndarray:
        return np.array([*self.prev_returns, self.sigma])


def day_contexts(
    corpus: MarketCorpus, days: Sequence[dt.date], halflife: float, window: int
) -> dict[dt.date, DayContext]:
    """Previous-day returns, mean per-asset EW volatility and today's basket return."""
    all_dates = corpus.dates()
    index = {d: i for i, d in enumerate(all_dates)}
    out: dict[dt.date, DayContext] = {}
    for day in days:
        i = index.get(day)
        if i is None or i < 2:
            raise InvariantError(f"{day} needs two earlier trading days", origin=ORIGIN)
        hist = all_dates[max(0, i - max(window, 2)) : i + 1]
        rets = asset_log_returns(corpus, hist)
        sigma = float(np.mean([ew_std(rets[a][:-1], halflife) for a in ASSETS]))
        basket = math.log(sum(math.exp(rets[a][-1]) for a in ASSETS) / len(ASSETS))
        out[day] = DayContext(
            day=day,
            prev_returns=tuple(rets[a][-2] for a in ASSETS),
            sigma=sigma,
            basket_return=basket,
        )
    return out


def actor_features(candidate: Candidate, context: DayContext) -> np.ndarray:
    """[alpha, rationale..., length / 100, prev returns per asset, EW vol]."""
    return np.concatenate(
        [[candidate.alpha], candidate.rationale_vec, [candidate.length / 100.0], context.vector()]
    )


def actor_inputs(sentiment_dim: int) -> int:
    return 2 + sentiment_dim + N_CONTEXT_FEATURES


def rank_accuracy(actor: ActorPolicy, pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> float:
    """Fraction of (better, worse) feature pairs the actor orders correctly."""
    if not pairs:
        return math.nan
    better = actor.forward(np.array([b for b, _ in pairs]))
    worse = actor.forward(np.array([w for _, w in pairs]))
    return float(np.mean(better > worse))


def choose(actor: ActorPolicy, candidates: Sequence[Candidate], context: DayContext) -> Candidate:
    """Highest-scoring candidate; ties go to the lower id."""
    scores = actor.forward(np.array([actor_features(c, context) for c in candidates]))
    order = sorted(range(len(candidates)), key=lambda i: (-scores[i], candidates[i].id))
    return candidates[order[0]]


# ============================================================================
# Loop
# ============================================================================


class EpochSummary(BaseModel):
    epoch: int
    n_actor_pairs: int
    n_judge_pairs: int
    mean_elo_spread: float
    online_elo: float
    heldout_accuracy: float | None


class TrainingSummary(BaseModel):
    seed: int
    train_days: list[dt.date]
    heldout_days: list[dt.date]
    steps_per_epoch: int
    epochs: list[EpochSummary]


@dataclass
class TrainingResult:
    models: Models
    metrics: pd.DataFrame
    summary: TrainingSummary
    pairs: list[PreferencePair]


def _batch_from(datasets: Sequence[DayDataset], contexts: dict[dt.date, DayContext], agg_dim: int) -> TrainBatch:
    v_pref, v_other, x_c, x_r = [], [], [], []
    for data in datasets:
        ctx = contexts[data.day]
        for chosen, rejected in data.judge_pairs:
            v_pref.append(chosen.score_vector.as_array())
            v_other.append(rejected.score_vector.as_array())
        for pair in data.actor_pairs:
            x_c.append(actor_features(pair.chosen, ctx))
            x_r.append(actor_features(pair.rejected, ctx))
    return TrainBatch(
        v_preferred=np.array(v_pref) if v_pref else np.zeros((0, agg_dim)),
        v_other=np.array(v_other) if v_other else np.zeros((0, agg_dim)),
        x_chosen=np.array(x_c) if x_c else None,
        x_rejected=np.array(x_r) if x_r else None,
    )


def split_days(days: Sequence[dt.date], holdout_fraction: float) -> tuple[list[dt.date], list[dt.date]]:
    """Chronological split; the last ``holdout_fraction`` of days are held out."""
    days = list(days)
    if holdout_fraction <= 0 or len(days) < 2:
        return days, []
    n_hold = min(max(1, round(len(days) * holdout_fraction)), len(days) - 1)
    return days[:-n_hold], days[-n_hold:]


def run_training_loop(
    corpus: MarketCorpus,
    source: CandidateSource,
    config: RunConfig,
    *,
    writer: ArtifactWriter | None = None,
    initial: Models | None = None,
) -> TrainingResult:
    """Alternate per-day dataset construction and train steps over epochs."""
    train_cfg = config.training
    pref_cfg = config.preference
    seed = config.seed

    dates = corpus.dates()
    usable = dates[train_cfg.warmup_days :]
    if len(usable) < 1:
        raise InvariantError(
            f"corpus has {len(dates)} days; need more than warmup_days={train_cfg.warmup_days}", origin=ORIGIN
        )
    train_days, heldout_days = split_days(usable, train_cfg.holdout_fraction)
    contexts = day_contexts(corpus, usable, config.rewards.ew_halflife_days, config.rewards.sharpe_window)

    candidates = {
        day: attach_rewards(source.candidates_for(day, corpus), corpus, config.rewards) for day in usable
    }
    dim = len(candidates[usable[0]][0].rationale_vec)
    models = initial or Models.init(seed, actor_inputs(dim), train_cfg, config.rewards.aggregator_hidden)

    steps_per_epoch = math.ceil(len(train_days) / train_cfg.batch_size) if train_days else 0
    rows: list[dict[str, float | int]] = []
    epochs: list[EpochSummary] = []
    all_pairs: list[PreferencePair] = []
    iteration = 0

    for epoch in range(train_cfg.epochs):
        judge = RewardJudge(rng_for(seed, f"training.judge.{epoch}"), pref_cfg.judge_noise_sd, pref_cfg.malformed_rate)
        datasets = {
            day: build_day_dataset(candidates[day], judge, pref_cfg, contexts[day].sigma, prior=pref_cfg.elo_prior)
            for day in train_days
        }
        order = rng_for(seed, f"training.shuffle.{epoch}").permutation(len(train_days))
        shuffled = [train_days[i] for i in order]
        for start in range(0, len(shuffled), train_cfg.batch_size):
            batch_days = shuffled[start : start + train_cfg.batch_size]
            batch = _batch_from([datasets[d] for d in batch_days], contexts, len(CHANNELS))
            models, diag = train_step(models, batch, train_cfg)
            iteration += 1
            rows.append({"iter": iteration, **diag.model_dump()})

        epochs.append(
            _summarise_epoch(epoch, models, datasets, candidates, contexts, heldout_days, config)
        )
        logger.info(
            "Epoch %d: l_actor=%.4f heldout_acc=%s",
            epoch,
            rows[-1]["l_actor"] if rows else math.nan,
            epochs[-1].heldout_accuracy,
        )
        if epoch == train_cfg.epochs - 1:
            all_pairs = [p for d in train_days for p in datasets[d].pairs()]

    metrics = pd.DataFrame(rows, columns=METRIC_COLUMNS)
    summary = TrainingSummary(
        seed=seed,
        train_days=train_days,
        heldout_days=heldout_days,
        steps_per_epoch=steps_per_epoch,
        epochs=epochs,
    )
    result = TrainingResult(models=models, metrics=metrics, summary=summary, pairs=all_pairs)
    if writer is not None:
        save_training(result, writer, config)
    return result


def _summarise_epoch(
    epoch: int,
    models: Models,
    datasets: dict[dt.date, DayDataset],
    candidates: dict[dt.date, list[Candidate]],
    contexts: dict[dt.date, DayContext],
    heldout_days: Sequence[dt.date],
    config: RunConfig,
) -> EpochSummary:
    pref_cfg = config.preference
    spreads = [d.elo.spread for d in datasets.values() if d.elo is not None]
    online = OnlineElo(pref_cfg.k_base, pref_cfg.sigma_max, pref_cfg.initial_rating)
    fee = config.rewards.fee_bps / 10_000
    for day in sorted(datasets):
        ctx = contexts[day]
        pick = choose(models.actor, candidates[day], ctx)
        online.update(pick.alpha * ctx.basket_return - abs(pick.alpha) * fee, ctx.basket_return, ctx.sigma)

    accuracy = heldout_accuracy(models.actor, candidates, contexts, heldout_days)
    return EpochSummary(
        epoch=epoch,
        n_actor_pairs=sum(len(d.actor_pairs) for d in datasets.values()),
        n_judge_pairs=sum(len(d.judge_pairs) for d in datasets.values()),
        mean_elo_spread=float(np.mean(spreads)) if spreads else 0.0,
        online_elo=online.rating,
        heldout_accuracy=accuracy,
    )


def heldout_accuracy(
    actor: ActorPolicy,
    candidates: dict[dt.date, list[Candidate]],
    contexts: dict[dt.date, DayContext],
    days: Sequence[dt.date],
) -> float | None:
    """On held-out days, how often the actor ranks the best-reward candidate above the worst."""
    pairs = []
    for day in days:
        scored = [(c.rewards.mean(), c) for c in candidates[day] if c.rewards is not None]
        if len(scored) < 2:
            continue
        _, best = max(scored, key=lambda sc: sc[0])
        _, worst = min(scored, key=lambda sc: sc[0])
        if best.id != worst.id:
            pairs.append((actor_features(best, contexts[day]), actor_features(worst, contexts[day])))
    return rank_accuracy(actor, pairs) if pairs else None


def save_training(result: TrainingResult, writer: ArtifactWriter, config: RunConfig) -> None:
    models = result.models
    models.aggregator.save(writer.path("aggregator.json"), "aggregator")
    models.meta.save(writer.path("meta_judge.json"), "meta_judge")
    models.judge.save(writer.path("judge.json"), "judge")
    models.actor.save(writer.path("actor.json"), "actor")
    writer.save_csv("metrics.csv", result.metrics)
    writer.save_json("summary.json", result.summary)
    writer.save_jsonl("pairs.jsonl", result.pairs)
    writer.save_text("config.txt", config.dump_flat())

