"""CLI entry point for cryptojudge.

Every subcommand reads fixtures, writes its artifacts atomically and prints a
short summary to stdout. Failures surface as one stderr line:

    error origin=<module> kind=<ClassName> message=<json-string>
"""

import argparse
import asyncio
import datetime as dt
import json
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

from . import __version__
from .artifacts import ArtifactWriter, markdown_table, write_atomic
from .backtest import BacktestReport, run_windows, wealth_frame
from .candidates import CandidateSource, FixtureCandidateSource, SyntheticCandidateSource, generate_candidates
from .config import RunConfig, parse_override
from .errors import InputError, PipelineError
from .evaluation import Metric, agreement_report, format_likert_table, load_ratings
from .market_data import (
    CorpusSource,
    MarketCorpus,
    RegimeWindow,
    find_window,
    load_corpus,
    load_corpus_dir,
    load_regimes,
    write_corpus,
    write_regimes,
)
from .policies import list_policies, resolve_policy
from .preference import RewardJudge, attach_rewards, build_day_dataset, write_candidates, write_pairs
from .seeding import rng_for
from .synthetic import generate_corpus
from .training import day_contexts, run_training_loop

logger = logging.getLogger(__name__)

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]
SYNTHETIC_START = "2025-04-08"


def format_error(error: PipelineError) -> str:
    kind = type(error).__name__
    return f"error origin={error.origin} kind={kind} message={json.dumps(error.message)}"


def _date(value: str) -> dt.date:
    try:
        return dt.date.fromisoformat(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {value!r}") from None


# ============================================================================
# Shared plumbing
# ============================================================================


def load_config(args: argparse.Namespace) -> RunConfig:
    """Defaults < --config file < --set overrides < dedicated flags."""
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = dict(parse_override(item) for item in [*args.set, *getattr(args, "sub_set", [])])
    seed = getattr(args, "seed", None)
    if seed is not None:
        overrides.update({"seed": str(seed), "backtest.rng_seed": str(seed), "training.rng_seed": str(seed)})
    epochs = getattr(args, "epochs", None)
    if epochs is not None:
        overrides["training.epochs"] = str(epochs)
    return config.with_overrides(overrides) if overrides else config


def _corpus(args: argparse.Namespace, config: RunConfig) -> MarketCorpus:
    data_dir = args.data or config.data.data_dir
    if data_dir is None:
        raise InputError("no data directory; pass --data or set data.data_dir", origin="cli")
    if not Path(data_dir).is_dir():
        raise InputError("data directory not found", origin="cli", path=str(data_dir))
    return load_corpus_dir(Path(data_dir), config.data)


def _candidate_source(args: argparse.Namespace, config: RunConfig) -> CandidateSource:
    path = getattr(args, "candidates", None) or config.data.candidates_path
    if path is not None:
        return FixtureCandidateSource(Path(path))
    return SyntheticCandidateSource(seed=config.seed, k=config.preference.k_candidates)


def _candidate_days(source: CandidateSource, days: Sequence[dt.date]) -> list[dt.date]:
    if isinstance(source, FixtureCandidateSource):
        known = set(source.days())
        return [d for d in days if d in known]
    return list(days)


# ============================================================================
# Subcommands
# ============================================================================


def cmd_ingest(args: argparse.Namespace, config: RunConfig) -> int:
    if args.synthetic:
        raw = generate_corpus(
            args.start,
            args.days,
            seed=config.seed,
            drift=args.drift,
            vol=args.vol,
            sentiment_dim=config.data.sentiment_dim,
        )
        corpus = load_corpus(CorpusSource(raw), config.data)
        dropped = len(raw.news) - len(corpus.news)
    else:
        if args.data is None:
            raise InputError("pass --data DIR or --synthetic", origin="cli")
        corpus = _corpus(args, config)
        dropped = None

    out: Path = args.out
    write_corpus(corpus, out)
    write_regimes(load_regimes(args.regimes), out / "regimes.csv")
    if args.candidates_k:
        source = SyntheticCandidateSource(seed=config.seed, k=args.candidates_k)
        write_candidates(generate_candidates(source, corpus.dates(), corpus), out / "candidates.jsonl")
    write_atomic(out / "config.txt", config.dump_flat())

    days = corpus.dates()
    if days:
        print(f"Wrote {len(days)} days ({days[0]} .. {days[-1]}) and {len(corpus.news)} articles to {out}")
    else:
        logger.warning("Corpus has no day with candles for every asset")
        print(f"Wrote 0 days and {len(corpus.news)} articles to {out}")
    if dropped is not None:
        print(f"Dropped {dropped} near-duplicate or off-list articles")
    return 0


def _covered_windows(windows: Sequence[RegimeWindow], corpus: MarketCorpus) -> list[RegimeWindow]:
    available = set(corpus.dates())
    return [w for w in windows if all(d in available for d in w.days())]


def cmd_backtest(args: argparse.Namespace, config: RunConfig) -> int:
    corpus = _corpus(args, config)
    table = load_regimes(args.regimes)
    if args.asset_window:
        windows = [find_window(table, key) for key in args.asset_window]
    else:
        windows = _covered_windows(table, corpus)
        if not windows:
            raise InputError("no regime window is fully covered by the data; pass --asset-window", origin="cli")

    name, policy = resolve_policy(args.policy, corpus, config, lambda: _candidate_source(args, config))
    results = asyncio.run(
        run_windows(
            windows,
            lambda _w: (name, policy),
            corpus,
            config.backtest,
            jobs=args.jobs,
            lookback_days=config.data.news_lookback_days,
        )
    )
    report = BacktestReport(runs=results)
    out: Path = args.out
    writer = ArtifactWriter(out.parent)
    writer.save_json(out.name, report)
    for result in results:
        tag = result.window.replace(":", "_")
        writer.save_csv(f"{out.stem}_{tag}_{result.policy}_wealth.csv", wealth_frame(result))
    writer.save_text(f"{out.stem}_config.txt", config.dump_flat())

    headers = ["window", "policy", "total return", "sharpe", "max drawdown", "days"]
    print(markdown_table(headers, report.metrics_rows()))
    return 0


def cmd_build_prefs(args: argparse.Namespace, config: RunConfig) -> int:
    corpus = _corpus(args, config)
    source = _candidate_source(args, config)
    pref = config.preference
    days = _candidate_days(source, corpus.dates()[config.training.warmup_days :])
    if not days:
        raise InputError("no days with candidates after the warm-up period", origin="cli")
    contexts = day_contexts(corpus, days, config.rewards.ew_halflife_days, config.rewards.sharpe_window)
    judge = RewardJudge(rng_for(config.seed, "build-prefs.judge"), pref.judge_noise_sd, pref.malformed_rate)

    candidates = []
    pairs = []
    for day in days:
        scored = attach_rewards(source.candidates_for(day, corpus), corpus, config.rewards)
        data = build_day_dataset(scored, judge, pref, contexts[day].sigma, prior=pref.elo_prior)
        candidates.extend(data.candidates)
        pairs.extend(data.pairs())

    writer = ArtifactWriter(args.out)
    write_candidates(candidates, writer.path("candidates.jsonl"))
    write_pairs(pairs, writer.path("pairs.jsonl"))
    writer.save_text("config.txt", config.dump_flat())

    n_judge = sum(1 for p in pairs if p.kind == "judge")
    print(f"Built {len(pairs) - n_judge} actor pairs and {n_judge} judge pairs over {len(days)} days -> {args.out}")
    return 0


def cmd_train_loop(args: argparse.Namespace, config: RunConfig) -> int:
    corpus = _corpus(args, config)
    source = _candidate_source(args, config)
    result = run_training_loop(corpus, source, config, writer=ArtifactWriter(args.out))

    summary = result.summary
    print(
        f"Trained {len(summary.epochs)} epochs x {summary.steps_per_epoch} steps on "
        f"{len(summary.train_days)} days ({len(summary.heldout_days)} held out) -> {args.out}"
    )
    if summary.epochs:
        last = summary.epochs[-1]
        acc = "n/a" if last.heldout_accuracy is None else f"{last.heldout_accuracy:.3f}"
        print(f"Final online Elo {last.online_elo:.1f}, held-out rank accuracy {acc}")
    return 0


def cmd_eval_agreement(args: argparse.Namespace, config: RunConfig) -> int:
    report = agreement_report(load_ratings(args.input), args.metric)
    if args.out is not None:
        write_atomic(args.out, report.model_dump_json(indent=2) + "\n")
    print(markdown_table(["dimension", "likert", "kendall W", "krippendorff alpha"], format_likert_table(report)))
    return 0


def cmd_report(args: argparse.Namespace, config: RunConfig) -> int:
    path: Path = args.input
    if not path.exists():
        raise InputError("file not found", origin="cli", path=str(path))
    try:
        report = BacktestReport.model_validate_json(path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise InputError(f"not a backtest report ({e.__class__.__name__})", origin="cli", path=str(path)) from e

    if args.format == "csv":
        text = report.wealth_frame().to_csv(index=False, lineterminator="\n")
    elif args.format == "markdown":
        headers = ["window", "policy", "total return", "sharpe", "max drawdown", "days"]
        text = markdown_table(headers, report.metrics_rows()) + "\n"
    else:
        text = json.dumps([{"window": r.window, "policy": r.policy, **r.metrics.model_dump()} for r in report.runs], indent=2)
        text += "\n"

    if args.out is None:
        sys.stdout.write(text)
    else:
        write_atomic(args.out, text)
        print(f"Wrote {args.format} report to {args.out}")
    return 0


COMMANDS: dict[str, Callable[[argparse.Namespace, RunConfig], int]] = {
    "ingest": cmd_ingest,
    "backtest": cmd_backtest,
    "build-prefs": cmd_build_prefs,
    "train-loop": cmd_train_loop,
    "eval-agreement": cmd_eval_agreement,
    "report": cmd_report,
}


# ============================================================================
# Parser
# ============================================================================


def build_parser() -> argparse.ArgumentParser:
    formatter = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="cryptojudge",
        description="Market-data rewards, backtests and judge-driven preference training",
        formatter_class=formatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, default=None, help="Flat key = value config file")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override one config key (repeatable)",
    )
    parser.add_argument("--log-level", choices=LOG_LEVELS, default="WARNING", help="Logging level (stderr)")

    # Same flags after the subcommand; SUPPRESS keeps them from resetting the top-level values.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="Flat key = value config file")
    common.add_argument(
        "--set",
        dest="sub_set",
        action="append",
        default=argparse.SUPPRESS,
        metavar="KEY=VALUE",
        help="Override one config key (repeatable)",
    )
    common.add_argument("--log-level", choices=LOG_LEVELS, default=argparse.SUPPRESS, help="Logging level (stderr)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # ingest - validate, filter and de-duplicate a corpus
    ingest = subparsers.add_parser(
        "ingest", help="Validate and de-duplicate a corpus", formatter_class=formatter, parents=[common]
    )
    ingest.add_argument("--data", type=Path, default=None, help="Fixture directory to ingest")
    ingest.add_argument("--synthetic", action="store_true", help="Generate a seeded synthetic corpus instead")
    ingest.add_argument("--days", type=int, default=30, help="Synthetic corpus length")
    ingest.add_argument("--start", type=_date, default=SYNTHETIC_START, help="Synthetic corpus first day")
    ingest.add_argument("--drift", type=float, default=0.0, help="Synthetic daily log-return mean")
    ingest.add_argument("--vol", type=float, default=0.02, help="Synthetic daily log-return sd")
    ingest.add_argument("--regimes", type=Path, default=None, help="Regime table to copy (default: bundled)")
    ingest.add_argument(
        "--candidates-k", type=int, default=0, help="Also write K synthetic candidates per day (0 = none)"
    )
    ingest.add_argument("--seed", type=int, default=None, help="Global seed (overrides config)")
    ingest.add_argument("--out", type=Path, required=True, help="Output fixture directory")

    # backtest - simulate policies over regime windows
    policies = ", ".join(p.id.value for p in list_policies())
    backtest = subparsers.add_parser(
        "backtest", help="Backtest a policy over regime windows", formatter_class=formatter, parents=[common]
    )
    backtest.add_argument("--data", type=Path, default=None, help="Fixture directory")
    backtest.add_argument("--regimes", type=Path, default=None, help="regimes.csv (default: bundled)")
    backtest.add_argument(
        "--asset-window",
        action="append",
        default=[],
        metavar="ASSET:LABEL",
        help="Window to run (repeatable; default: every window the data covers)",
    )
    backtest.add_argument("--policy", default="long", help=f"Built-in ({policies}), schedule JSON or actor file")
    backtest.add_argument("--candidates", type=Path, default=None, help="candidates.jsonl for an actor policy")
    backtest.add_argument("--seed", type=int, default=None, help="Global seed (overrides config)")
    backtest.add_argument("--jobs", type=int, default=1, help="Windows run in parallel")
    backtest.add_argument("--out", type=Path, default=Path("report.json"), help="Report path")

    # build-prefs - score candidates and emit preference pairs
    prefs = subparsers.add_parser(
        "build-prefs", help="Build the preference dataset", formatter_class=formatter, parents=[common]
    )
    prefs.add_argument("--data", type=Path, default=None, help="Fixture directory")
    prefs.add_argument("--candidates", type=Path, default=None, help="candidates.jsonl (default: synthetic)")
    prefs.add_argument("--seed", type=int, default=None, help="Global seed (overrides config)")
    prefs.add_argument("--out", type=Path, default=Path("prefs"), help="Output directory")

    # train-loop - alternate dataset construction and optimisation
    train = subparsers.add_parser(
        "train-loop", help="Run the actor/judge/meta-judge loop", formatter_class=formatter, parents=[common]
    )
    train.add_argument("--data", type=Path, default=None, help="Fixture directory")
    train.add_argument("--candidates", type=Path, default=None, help="candidates.jsonl (default: synthetic)")
    train.add_argument("--epochs", type=int, default=None, help="Epochs (overrides training.epochs)")
    train.add_argument("--seed", type=int, default=None, help="Global seed (overrides config)")
    train.add_argument("--out", type=Path, default=Path("models"), help="Output directory")

    # eval-agreement - inter-rater statistics
    agree = subparsers.add_parser(
        "eval-agreement", help="Inter-rater agreement report", formatter_class=formatter, parents=[common]
    )
    agree.add_argument("--in", dest="input", type=Path, required=True, help="ratings.csv")
    agree.add_argument("--metric", choices=[m.value for m in Metric], default=Metric.ORDINAL.value, help="Alpha metric")
    agree.add_argument("--out", type=Path, default=None, help="Write the report as JSON")

    # report - convert report.json
    report = subparsers.add_parser(
        "report", help="Render a backtest report", formatter_class=formatter, parents=[common]
    )
    report.add_argument("--in", dest="input", type=Path, required=True, help="report.json")
    report.add_argument("--format", choices=["csv", "markdown", "json"], default="markdown", help="Output format")
    report.add_argument("--out", type=Path, default=None, help="Output file (default: stdout)")

    return parser


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def run(argv: Sequence[str]) -> int:
    """Parse ``argv``, dispatch, and map pipeline errors to an exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    configure_logging(args.log_level)

    try:
        config = load_config(args)
        return COMMANDS[args.command](args, config)
    except PipelineError as e:
        logger.debug("Command %s failed", args.command, exc_info=True)
        print(format_error(e), file=sys.stderr)
        return e.exit_code


def main(argv: Sequence[str] | None = None) -> int:
    """Main entry point."""
    try:
        return run(sys.argv[1:] if argv is None else argv)
    except KeyboardInterrupt:
        print("\nInterrupted.", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
