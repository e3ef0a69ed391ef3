"""Backtest policies: named baselines, scripted schedules and a trained actor."""

import datetime as dt
import json
import logging
from collections.abc import Callable
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path

from .backtest import Policy
from .candidates import CandidateSource
from .config import ASSETS, RunConfig
from .errors import InputError, InvariantError
from .market_data import MarketCorpus, PromptContext
from .models import ActorPolicy
from .training import choose, day_contexts

logger = logging.getLogger(__name__)

ORIGIN = "backtest"


class PolicyKey(StrEnum):
    """Built-in policy identifiers."""

    FLAT = "flat"
    LONG = "long"
    SHORT = "short"
    MOMENTUM = "momentum"


def _flat(context: PromptContext) -> float:
    return 0.0


def _long(context: PromptContext) -> float:
    return 1.0


def _short(context: PromptContext) -> float:
    return -1.0


def _momentum(context: PromptContext) -> float:
    """Lean into the day's average open-to-close move, full size at 2%."""
    moves = [context.candles[a].close / context.candles[a].open - 1.0 for a in ASSETS]
    return max(-1.0, min(1.0, sum(moves) / len(moves) / 0.02))


@dataclass
class PolicySpec:
    id: PolicyKey
    description: str
    fn: Policy


POLICIES: dict[PolicyKey, PolicySpec] = {
    PolicyKey.FLAT: PolicySpec(PolicyKey.FLAT, "Never trade; hold the endowment", _flat),
    PolicyKey.LONG: PolicySpec(PolicyKey.LONG, "Spend all cash every day", _long),
    PolicyKey.SHORT: PolicySpec(PolicyKey.SHORT, "Liquidate all holdings", _short),
    PolicyKey.MOMENTUM: PolicySpec(PolicyKey.MOMENTUM, "Scale alpha with the day's basket move", _momentum),
}


def get_policy(name: str | PolicyKey) -> PolicySpec | None:
    """Get a built-in policy by name."""
    if isinstance(name, str):
        try:
            name = PolicyKey(name)
        except ValueError:
            return None
    return POLICIES.get(name)


def list_policies() -> list[PolicySpec]:
    return list(POLICIES.values())


def schedule_policy(path: Path) -> Policy:
    """Scripted policy from a ``{"YYYY-MM-DD": alpha}`` JSON file; missing days trade 0."""
    if not path.exists():
        raise InputError("file not found", origin=ORIGIN, path=str(path))
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        schedule = {dt.date.fromisoformat(k): float(v) for k, v in raw.items()}
    except (json.JSONDecodeError, AttributeError, TypeError, ValueError) as e:
        raise InputError(f"invalid alpha schedule ({e})", origin=ORIGIN, path=str(path)) from e

    def policy(context: PromptContext) -> float:
        return schedule.get(context.date, 0.0)

    return policy


def actor_policy(
    actor: ActorPolicy, source: CandidateSource, corpus: MarketCorpus, config: RunConfig
) -> Policy:
    """Each day, trade the alpha of the candidate the actor scores highest."""
    halflife = config.rewards.ew_halflife_days
    window = config.rewards.sharpe_window

    def policy(context: PromptContext) -> float:
        try:
            ctx = day_contexts(corpus, [context.date], halflife, window)[context.date]
        except InvariantError:
            logger.warning("No volatility history for %s; actor holds", context.date)
            return 0.0
        candidates = source.candidates_for(context.date, corpus)
        return choose(actor, candidates, ctx).alpha

    return policy


def resolve_policy(
    arg: str,
    corpus: MarketCorpus,
    config: RunConfig,
    source_factory: Callable[[], CandidateSource] | None = None,
) -> tuple[str, Policy]:
    """Turn a ``--policy`` argument into ``(name, policy)``.

    Accepts a built-in name, a schedule JSON file, or an actor parameter file
    (JSON with a ``layers`` key).
    """
    builtin = get_policy(arg)
    if builtin is not None:
        return builtin.id.value, builtin.fn
    path = Path(arg)
    if not path.exists():
        names = ", ".join(p.id.value for p in list_policies())
        raise InputError(f"unknown policy (built-ins: {names})", origin=ORIGIN, path=arg)
    try:
        head = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InputError(f"invalid JSON ({e.msg})", origin=ORIGIN, path=arg, line=e.lineno) from e
    if isinstance(head, dict) and "layers" in head:
        if source_factory is None:
            raise InputError("actor policy needs a candidate source", origin=ORIGIN, path=arg)
        return path.stem, actor_policy(ActorPolicy.load(path), source_factory(), corpus, config)
    return path.stem, schedule_policy(path)
