"""Tests for built-in, scripted and actor-driven policies."""

import json
from pathlib import Path

import pytest

from cryptojudge.candidates import FixtureCandidateSource
from cryptojudge.config import RunConfig
from cryptojudge.errors import InputError
from cryptojudge.market_data import build_prompt_context
from cryptojudge.models import ActorPolicy
from cryptojudge.policies import PolicyKey, actor_policy, get_policy, list_policies, resolve_policy, schedule_policy
from cryptojudge.seeding import rng_for
from cryptojudge.training import actor_inputs

from .conftest import D2, D3, D4


class TestBuiltins:
    def test_registry(self):
        """Built-ins are listed in registry order; unknown names give None."""
        assert [p.id for p in list_policies()] == list(PolicyKey)
        assert get_policy("long") is not None
        assert get_policy("nope") is None

    def test_constant_policies(self, mini_corpus):
        """flat, long and short ignore the context."""
        ctx = build_prompt_context(D3, mini_corpus)
        assert get_policy(PolicyKey.FLAT).fn(ctx) == 0.0
        assert get_policy(PolicyKey.LONG).fn(ctx) == 1.0
        assert get_policy(PolicyKey.SHORT).fn(ctx) == -1.0

    def test_momentum_is_bounded(self, mini_corpus):
        """Momentum output stays in [-1, 1]."""
        for day in (D2, D3, D4):
            alpha = get_policy("momentum").fn(build_prompt_context(day, mini_corpus))
            assert -1.0 <= alpha <= 1.0


class TestSchedulePolicy:
    """Test the dated-fraction schedule policy."""

    def test_fixture_schedule(self, mini_dir: Path, mini_corpus):
        """Dated fractions are returned for the matching days."""
        policy = schedule_policy(mini_dir / "schedule.json")
        assert [policy(build_prompt_context(d, mini_corpus)) for d in (D2, D3, D4)] == [0.5, -0.5, 0.0]

    def test_missing_file(self, tmp_path: Path):
        with pytest.raises(InputError):
            schedule_policy(tmp_path / "none.json")

    def test_bad_dates(self, tmp_path: Path):
        """Keys that are not ISO dates are an input error."""
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"yesterday": 0.5}))
        with pytest.raises(InputError):
            schedule_policy(path)


class TestActorPolicy:
    """Test trading with a saved actor."""

    @pytest.fixture
    def actor_file(self, tmp_path: Path) -> Path:
        actor = ActorPolicy.init(rng_for(0, "actor"), actor_inputs(3), 4)
        return actor.save(tmp_path / "actor.json", "actor")

    def test_picks_a_fixture_candidate(self, actor_file: Path, mini_dir: Path, mini_corpus):
        """The actor returns the alpha of one of the day's candidates."""
        source = FixtureCandidateSource(mini_dir / "candidates.jsonl")
        policy = actor_policy(ActorPolicy.load(actor_file), source, mini_corpus, RunConfig())
        assert policy(build_prompt_context(D3, mini_corpus)) in {1.0, -1.0, 0.2}

    def test_holds_without_history(self, actor_file: Path, mini_dir: Path, mini_corpus):
        """No candidates before the first fixture day means holding."""
        source = FixtureCandidateSource(mini_dir / "candidates.jsonl")
        policy = actor_policy(ActorPolicy.load(actor_file), source, mini_corpus, RunConfig())
        assert policy(build_prompt_context(D2, mini_corpus)) == 0.0

    def test_resolve_actor_file(self, actor_file: Path, mini_dir: Path, mini_corpus):
        name, _ = resolve_policy(
            str(actor_file), mini_corpus, RunConfig(), lambda: FixtureCandidateSource(mini_dir / "candidates.jsonl")
        )
        assert name == "actor"

    def test_resolve_actor_needs_candidates(self, actor_file: Path, mini_corpus):
        """A parameter file without a candidate source cannot be resolved."""
        with pytest.raises(InputError):
            resolve_policy(str(actor_file), mini_corpus, RunConfig())


class TestResolvePolicy:
    """Test resolving a policy argument to a callable."""

    def test_builtin(self, mini_corpus):
        name, _ = resolve_policy("short", mini_corpus, RunConfig())
        assert name == "short"

    def test_schedule_file(self, mini_dir: Path, mini_corpus):
        name, policy = resolve_policy(str(mini_dir / "schedule.json"), mini_corpus, RunConfig())
        assert name == "schedule"
        assert policy(build_prompt_context(D2, mini_corpus)) == 0.5

    def test_unknown(self, mini_corpus):
        """Unknown names list the built-ins in the error."""
        with pytest.raises(InputError, match="built-ins"):
            resolve_policy("yolo", mini_corpus, RunConfig())
