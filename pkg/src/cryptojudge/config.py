"""Run configuration: pydantic models plus the flat ``key = value`` file format.

Config files hold one ``dotted.key = value`` per line; ``#`` starts a comment
and comma-separated values populate list fields. Precedence is model defaults,
then the file, then ``--set`` overrides, then dedicated CLI flags.
"""

from enum import StrEnum
from pathlib import Path
from typing import Any

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    field_validator,
    model_validator,
)

from .errors import ConfigError, InputError


class Asset(StrEnum):
    """Traded assets."""

    BTC = "BTC"
    ETH = "ETH"
    SOL = "SOL"


ASSETS: tuple[Asset, ...] = (Asset.BTC, Asset.ETH, Asset.SOL)

DEFAULT_PUBLISHERS = ["Bloomberg", "Yahoo Finance", "Reuters", "crypto.news"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class DataConfig(_Section):
    """Fixture locations and ingestion parameters."""

    data_dir: Path | None = None
    candidates_path: Path | None = None
    sentiment_dim: PositiveInt = 8
    news_publishers: list[str] = Field(default_factory=lambda: list(DEFAULT_PUBLISHERS))
    max_hamming: int = Field(default=3, ge=0, le=64)
    news_lookback_days: PositiveInt = 1

    @field_validator("news_publishers", mode="before")
    @classmethod
    def _split_publishers(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [p.strip() for p in value.split(",") if p.strip()]
        return value


class RewardConfig(_Section):
    """Parameters of the five reward channels."""

    fee_bps: PositiveFloat = 10.0
    ew_halflife_days: PositiveInt = 10
    sharpe_window: PositiveInt = 20
    slippage_threshold_bps: PositiveFloat = 5.0
    impact_coeff: PositiveFloat = 0.1
    gas_scale: PositiveFloat = 1000.0
    liquidity_notional_usd: PositiveFloat = 500_000.0
    return_scale: PositiveFloat = 0.02
    sharpe_scale: PositiveFloat = 0.5
    drawdown_scale: PositiveFloat = 0.05
    liquidity_scale: PositiveFloat = 10.0
    aggregator_hidden: PositiveInt = 8


class BacktestConfig(_Section):
    """Portfolio simulator settings."""

    initial_capital: float = Field(default=1_000_000.0, gt=0)
    cash_fraction: float = Field(default=0.5, ge=0.0, le=1.0)
    fee_bps: float = Field(default=10.0, ge=0.0)
    slippage_sd: dict[Asset, float] = Field(
        default_factory=lambda: {Asset.BTC: 0.0005, Asset.ETH: 0.0005, Asset.SOL: 0.0012}
    )
    rng_seed: int = Field(default=0, ge=0, lt=2**64)

    @field_validator("slippage_sd")
    @classmethod
    def _non_negative_slippage(cls, value: dict[Asset, float]) -> dict[Asset, float]:
        for asset, sd in value.items():
            if sd < 0:
                raise ValueError(f"slippage_sd for {asset} must be >= 0")
        return value

    @property
    def fee_rate(self) -> float:
        return self.fee_bps / 10_000


class PreferenceConfig(_Section):
    """Candidate scoring, tiering and Elo aggregation."""

    rho: float = Field(default=0.3, ge=0.0, le=1.0)
    k_candidates: PositiveInt = 4
    n_evals: PositiveInt = 3
    k_base: PositiveFloat = 32.0
    sigma_max: PositiveFloat = 0.04
    variance_gate: float | None = Field(default=None, ge=0.0)
    verbosity_percentile: float = Field(default=95.0, gt=0.0, le=100.0)
    omega_1: float = Field(default=1.0, ge=0.0, le=2.0)
    omega_2: float = Field(default=1.0, ge=0.0, le=2.0)
    elo_prior: float = Field(default=0.5, ge=0.0)
    judge_noise_sd: float = Field(default=0.05, ge=0.0)
    malformed_rate: float = Field(default=0.0, ge=0.0, le=1.0)
    score_min: float = -1.0
    score_max: float = 1.0
    initial_rating: float = 1500.0

    @model_validator(mode="after")
    def _check_weights(self) -> "PreferenceConfig":
        if abs(self.omega_1 + self.omega_2 - 2.0) > 1e-12:
            raise ValueError("omega_1 + omega_2 must equal 2")
        if self.score_min >= self.score_max:
            raise ValueError("score_min must be below score_max")
        return self

    @property
    def effective_variance_gate(self) -> float:
        if self.variance_gate is None:
            return 0.5 * self.sigma_max
        return self.variance_gate


class TrainConfig(_Section):
    """Optimisation settings for the actor / judge / meta-judge loop."""

    beta: PositiveFloat = 1.0
    lr_agg: float = Field(default=1e-2, ge=0.0)
    lr_meta: float = Field(default=1e-2, ge=0.0)
    lr_judge: float = Field(default=1e-2, ge=0.0)
    lr_actor: float = Field(default=1e-3, ge=0.0)
    epochs: int = Field(default=1, ge=0)
    batch_size: PositiveInt = 8
    rng_seed: int = Field(default=0, ge=0, lt=2**64)
    actor_hidden: PositiveInt = 16
    judge_hidden: PositiveInt = 8
    holdout_fraction: float = Field(default=0.2, ge=0.0, lt=1.0)
    warmup_days: int = Field(default=3, ge=2)


class RunConfig(_Section):
    """Complete configuration for one CLI invocation."""

    seed: int = Field(default=0, ge=0, lt=2**64)
    data: DataConfig = Field(default_factory=DataConfig)
    rewards: RewardConfig = Field(default_factory=RewardConfig)
    backtest: BacktestConfig = Field(default_factory=BacktestConfig)
    preference: PreferenceConfig = Field(default_factory=PreferenceConfig)
    training: TrainConfig = Field(default_factory=TrainConfig)

    @classmethod
    def from_file(cls, path: Path) -> "RunConfig":
        """Load a flat config file over the defaults."""
        if not path.exists():
            raise InputError("config file not found", origin="config", path=str(path))
        return cls().with_overrides(parse_flat(path.read_text(encoding="utf-8"), source=str(path)))

    def with_overrides(self, overrides: dict[str, str]) -> "RunConfig":
        """Return a new config with dotted-key string overrides applied."""
        data = self.model_dump(mode="json")
        for key, value in overrides.items():
            _assign(data, key, value)
        try:
            return RunConfig.model_validate(data)
        except ValidationError as e:
            first = e.errors()[0]
            loc = ".".join(str(part) for part in first["loc"])
            raise ConfigError(f"invalid config value for {loc}: {first['msg']}", origin="config") from e

    def dump_flat(self) -> str:
        """Render the effective configuration in the flat file format."""
        lines: list[str] = []
        _flatten(self.model_dump(mode="json"), "", lines)
        return "\n".join(lines) + "\n"


def parse_flat(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines into an ordered dict of strings."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError("expected 'key = value'", origin="config", path=source, line=lineno)
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise InputError("empty key", origin="config", path=source, line=lineno)
        entries[key] = value.strip()
    return entries


def parse_override(item: str) -> tuple[str, str]:
    """Split a ``--set key=value`` argument."""
    if "=" not in item:
        raise ConfigError(f"override must be key=value, got {item!r}", origin="config")
    key, value = item.split("=", 1)
    return key.strip(), value.strip()


def _assign(data: dict[str, Any], dotted: str, value: str) -> None:
    parts = dotted.split(".")
    node: Any = data
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown config key: {dotted}", origin="config")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict):
        raise ConfigError(f"unknown config key: {dotted}", origin="config")
    # slippage_sd is keyed by asset; pydantic validates new keys there.
    if leaf not in node and parts[-2:-1] != ["slippage_sd"]:
        raise ConfigError(f"unknown config key: {dotted}", origin="config")
    node[leaf] = None if value.lower() in ("none", "null") else value


def _flatten(node: dict[str, Any], prefix: str, lines: list[str]) -> None:
    for key, value in node.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            _flatten(value, f"{dotted}.", lines)
        elif value is None:
            lines.append(f"{dotted} = none")
        elif isinstance(value, list):
            lines.append(f"{dotted} = {', '.join(str(v) for v in value)}")
        else:
            lines.append(f"{dotted} = {value}")
