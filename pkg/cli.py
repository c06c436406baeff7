"""
Imbalanced multilingual news classification toolkit
Command-line entry point: stats, folds, train, ablate, predict and synth subcommands
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

try:
    from dotenv import load_dotenv
except ImportError:
    # dotenv is optional - environment variables can be set directly
    load_dotenv = None

from config import resolve_config, write_resolved_config
from models import TASKS, ConfigError, Corpus, ImbalanceToolkitError, RunConfig
from services.checkpoints import CheckpointStore
from services.corpus_loader import load_corpus, merge_corpora, preprocess_corpus, task_units, token_stats
from services.ensemble import ensemble_predict_batch, select_top_k
from services.features import FeatureBuilder
from services.fold_planner import plan_folds
from services.reports import (
    ablation_table, cv_table, folds_table, stats_table, write_cv_reports, write_json, write_jsonl, write_text,
)
from services.synth import make_correlated_fixture, make_imbalanced_fixture, parse_ratio, split_counts
from services.trainer import (
    language_breakdown, run_ablation, run_monolingual, run_strategy, run_zero_shot, set_progress,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
ENSEMBLE_SIZE = 3
_handlers: List[logging.Handler] = []


def on_off(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("on", "true", "yes", "1"):
        return True
    if lowered in ("off", "false", "no", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected on or off, got '{value}'")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (e.g. a previous resolved_config.json)")
    common.add_argument("--corpus", help="corpus JSON Lines file")
    common.add_argument("--extra", action="append", help="additional labelled corpus to merge (repeatable)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--task", choices=TASKS + ("all",))
    common.add_argument("--features", help="'tfidf' or 'embeddings:PATH'")
    common.add_argument("--tfidf-max-tokens", type=int)
    common.add_argument("--tfidf-min-df", type=int)
    common.add_argument("--seed", type=int, help="seed base; every fold, init and sampler seed derives from it")
    common.add_argument("--k", type=int, help="number of cross-validation folds")
    common.add_argument("--strategy", choices=("agnostic", "dependent", "monolingual"))
    common.add_argument("--class-weights", type=on_off, metavar="on|off")
    common.add_argument("--sample-weights", type=on_off, metavar="on|off")
    common.add_argument("--undersample", type=on_off, metavar="on|off")
    common.add_argument("--epochs", type=int)
    common.add_argument("--patience", type=int)
    common.add_argument("--batch-size", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--weight-decay", type=float)
    common.add_argument("--hidden", type=int, help="trunk width; 0 trains a trunkless head")
    common.add_argument("--threshold", type=float)
    common.add_argument("--val-frac", type=float, help="inner validation fraction for early stopping")
    common.add_argument("--sampler-epoch-multiplier", type=float)
    common.add_argument("--by-language", action="store_const", const=True)
    common.add_argument("--zero-shot", metavar="LANG")
    common.add_argument("--log-level", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    common.add_argument("--quiet", action="store_true", help="no progress bars, warnings only")

    parser = argparse.ArgumentParser(prog="imbalance-toolkit",
                                     description="Imbalanced multilingual news classification experiments")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("stats", parents=[common], help="token statistics per task")
    commands.add_parser("folds", parents=[common], help="write the stratified fold plan")
    commands.add_parser("train", parents=[common], help="cross-validated training")
    commands.add_parser("ablate", parents=[common], help="ablation of class weights, sample weights and transfer")
    predict = commands.add_parser("predict", parents=[common], help="top-3 majority-vote predictions")
    predict.add_argument("--run", required=True, help="directory of a finished train run")
    synth = commands.add_parser("synth", parents=[common], help="write a synthetic fixture")
    synth.add_argument("--ratio", default="878:269:87")
    synth.add_argument("--n", type=int, default=1234)
    synth.add_argument("--dim", type=int, default=16)
    synth.add_argument("--separation", type=float, default=3.0)
    synth.add_argument("--correlated", action="store_true")
    return parser


def setup_logging(out_dir: Path, level: str, quiet: bool = False):
    """Log to stderr and to out_dir/run.log."""
    teardown_logging()
    out_dir.mkdir(parents=True, exist_ok=True)
    formatter = logging.Formatter(LOG_FORMAT)

    file_handler = logging.FileHandler(out_dir / "run.log", encoding="utf-8")
    file_handler.setFormatter(formatter)
    stream_handler = logging.StreamHandler()
    stream_handler.setFormatter(formatter)
    stream_handler.setLevel(logging.WARNING if quiet else level)

    root = logging.getLogger()
    root.setLevel(level)
    for handler in (file_handler, stream_handler):
        root.addHandler(handler)
        _handlers.append(handler)


def teardown_logging():
    root = logging.getLogger()
    while _handlers:
        handler = _handlers.pop()
        root.removeHandler(handler)
        handler.close()


def load_run_corpus(config: RunConfig, task_filter: Optional[Sequence[str]] = None) -> Corpus:
    if not config.corpus:
        raise ConfigError("corpus", "a corpus path is required")
    corpora = [load_corpus(path, task_filter) for path in [config.corpus, *config.extra]]
    corpus = corpora[0] if len(corpora) == 1 else merge_corpora(corpora)
    return preprocess_corpus(corpus)


def build_features(config: RunConfig, corpus: Corpus, tasks: Sequence[str]) -> FeatureBuilder:
    """TF-IDF is fitted once per run, label-free, on every document of the corpus."""
    unit_ids = [unit.unit_id for task in tasks for unit in task_units(corpus, task)]
    return FeatureBuilder.from_spec(config.features, [d.tokens for d in corpus], unit_ids, config.tfidf_config())


def cmd_stats(config: RunConfig, out_dir: Path) -> int:
    corpus = load_run_corpus(config)
    reports = [token_stats(corpus, task) for task in config.tasks()]
    write_json({r.task: r.to_dict() for r in reports}, out_dir / "stats.json")
    table = stats_table(reports)
    write_text(table, out_dir / "stats.txt")
    print(table, end="")
    return 0


def cmd_folds(config: RunConfig, out_dir: Path) -> int:
    corpus = load_run_corpus(config)
    task = config.tasks()[0]
    plan = plan_folds(corpus, task, config.train.k, config.train.seed_base, config.labels.get(task))
    write_json(plan.to_dict(), out_dir / "folds.json")
    table = folds_table(plan)
    write_text(table, out_dir / "folds.txt")
    print(table, end="")
    return 0


def cmd_train(config: RunConfig, out_dir: Path) -> int:
    corpus = load_run_corpus(config)
    tasks = config.tasks()
    train = config.train

    if train.strategy == "monolingual":
        reports = run_monolingual(corpus, train, config.tfidf_config())
        write_json({language: r.to_dict() for language, r in reports.items()}, out_dir / "monolingual_report.json")
        table = cv_table(reports)
        write_text(table, out_dir / "monolingual_report.txt")
        print(table, end="")
        return 0

    features = build_features(config, corpus, tasks)
    write_json(features.describe(), out_dir / "features.json")
    plan = plan_folds(corpus, tasks[0], train.k, train.seed_base, config.labels.get(tasks[0]))
    write_json(plan.to_dict(), out_dir / "folds.json")

    if config.zero_shot:
        reports = {task: run_zero_shot(corpus, task, features, train, config.zero_shot, plan) for task in tasks}
        write_cv_reports(reports, out_dir)
        print(cv_table(reports), end="")
        return 0

    store = CheckpointStore(out_dir)
    reports = run_strategy(corpus, features, train, tasks, plan, store, config.labels)
    store.write_manifest(features.describe(), {task: list(r.labels) for task, r in reports.items()})

    languages: Dict[str, Dict[str, float]] = {}
    if config.by_language:
        languages = {task: language_breakdown(report, corpus) for task, report in reports.items()}
    write_cv_reports(reports, out_dir, languages)
    print(cv_table(reports), end="")
    return 0


def cmd_ablate(config: RunConfig, out_dir: Path) -> int:
    corpus = load_run_corpus(config)
    tasks = config.tasks()
    features = build_features(config, corpus, tasks)
    report = run_ablation(corpus, features, config.train, tasks, labels=config.labels)
    write_json(report.to_dict(), out_dir / "ablation.json")
    table = ablation_table(report)
    write_text(table, out_dir / "ablation.txt")
    print(table, end="")
    return 0


def cmd_predict(config: RunConfig, out_dir: Path, run_dir: Path) -> int:
    """Reads checkpoints and text only; gold labels in the corpus are never parsed."""
    corpus = load_run_corpus(config, task_filter=())
    manifest = CheckpointStore.read_manifest(run_dir)
    tasks = [task for task in config.tasks() if manifest["tasks"].get(task)]
    if not tasks:
        raise ImbalanceToolkitError(f"Run {run_dir} has no checkpoints for {', '.join(config.tasks())}")

    units = {task: task_units(corpus, task, labeled_only=False) for task in tasks}
    embeddings_path = config.features.split(":", 1)[1] if config.features.startswith("embeddings:") else None
    features = FeatureBuilder.from_description(
        manifest["features"], [u.unit_id for task in tasks for u in units[task]], embeddings_path
    )

    records = []
    for task in tasks:
        checkpoints = select_top_k(CheckpointStore.load_task(run_dir, task), ENSEMBLE_SIZE)
        logger.info("%s ensemble: folds %s", task, [c.fold for c in checkpoints])
        predictions = ensemble_predict_batch(checkpoints, features.encode(units[task]), task,
                                             config.train.threshold)
        for unit, prediction in zip(units[task], predictions):
            labels = sorted(prediction) if isinstance(prediction, frozenset) else [prediction]
            records.append({"task": task, "id": unit.unit_id, "labels": labels})

    write_jsonl(records, out_dir / "predictions.jsonl")
    print(f"Wrote {len(records)} predictions to {out_dir / 'predictions.jsonl'}")
    return 0


def cmd_synth(args, config: RunConfig, out_dir: Path) -> int:
    ratio = parse_ratio(args.ratio)
    if args.correlated:
        fixture = make_correlated_fixture(args.n, args.dim, config.train.seed_base, args.separation, ratio)
    else:
        counts = split_counts(ratio, args.n)
        fixture = make_imbalanced_fixture(counts, args.dim, args.separation, config.train.seed_base)
        logger.info("Class counts: %s", counts)
    corpus_path, embeddings_path = fixture.write(out_dir)
    print(f"Wrote {corpus_path} and {embeddings_path}")
    return 0


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run one subcommand and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        config = resolve_config(args)
        out_dir = Path(config.output_dir)
        setup_logging(out_dir, config.log_level, args.quiet)
        set_progress(False if args.quiet else None)
        write_resolved_config(config, out_dir)
        logger.info("Running '%s' into %s", args.command, out_dir)

        if args.command == "stats":
            return cmd_stats(config, out_dir)
        if args.command == "folds":
            return cmd_folds(config, out_dir)
        if args.command == "train":
            return cmd_train(config, out_dir)
        if args.command == "ablate":
            return cmd_ablate(config, out_dir)
        if args.command == "predict":
            return cmd_predict(config, out_dir, Path(args.run))
        return cmd_synth(args, config, out_dir)
    except ImbalanceToolkitError as e:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    finally:
        teardown_logging()


def main():
    if load_dotenv is not None:
        load_dotenv()
    sys.exit(run_command())


if __name__ == "__main__":
    main()
