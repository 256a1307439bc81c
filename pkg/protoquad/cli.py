#!/usr/bin/env python3
"""
Command-line interface for ProtoQuad.
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler

from protoquad import __version__
from protoquad.config.manager import ConfigManager
from protoquad.embedders.logistic import LogisticEmbedder, ParamVector, train_logistic
from protoquad.embedders.universal import UniversalEmbedder
from protoquad.exceptions import ProtoQuadError, UsageError
from protoquad.parsers.base import Dataset
from protoquad.parsers.fishgrad import save_embeddings
from protoquad.parsers.tabular import load_dataset
from protoquad.pipeline import PrototypePipeline
from protoquad.selection.base import METHODS

logger = logging.getLogger("protoquad")

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per pipeline stage."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Path to configuration file")
    common.add_argument("--seed", type=int, help="Seed for every random choice (default 0)")
    common.add_argument("--threads", type=int, help="Worker threads (overrides PROTOQUAD_THREADS)")
    common.add_argument("--out", help="Output file (stdout if omitted)")
    common.add_argument("--log-level", help="Logging level (overrides logging.level)")

    parser = argparse.ArgumentParser(prog="protoquad", description="ProtoQuad CLI")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    train_parser = subparsers.add_parser("train", parents=[common], help="Fit the logistic model")
    train_parser.add_argument("--train", required=True, help="Training CSV")
    train_parser.add_argument("--l2", type=float, help="Penalty strength")

    embed_parser = subparsers.add_parser("embed", parents=[common], help="Write Fisher embeddings")
    embed_parser.add_argument("--data", required=True, help="CSV of examples to embed")
    embed_parser.add_argument("--params", help="Parameter JSON from `train`")
    embed_parser.add_argument("--train", help="Training CSV to fit on when --params is absent")
    embed_parser.add_argument("--predicted-labels", action="store_true",
                              help="Embed with the model's predicted labels instead of the file's")

    select_parser = subparsers.add_parser("select", parents=[common], help="Select prototypes")
    select_parser.add_argument("--train", help="Training CSV")
    select_parser.add_argument("--test", help="CSV of examples to explain (labels are ignored)")
    select_parser.add_argument("--train-grads", help="FISHGRAD training gradients of an external model")
    select_parser.add_argument("--test-grads", help="FISHGRAD test gradients of an external model")
    select_parser.add_argument("--k", type=int, help="Number of prototypes")
    select_parser.add_argument("--mode", choices=["full", "practical"], help="Fisher kernel mode")
    select_parser.add_argument("--method", choices=list(METHODS) + ["influence"], help="Selector")
    select_parser.add_argument("--delta", type=float, help="Failure probability (stochastic)")
    select_parser.add_argument("--partitions", type=int, help="Shards (distributed)")
    select_parser.add_argument("--ridge-coeff", type=float, help="Metric ridge coefficient")
    select_parser.add_argument("--tol-d", type=float, help="Absolute degeneracy threshold")
    select_parser.add_argument("--tol-d-scale", type=float, help="Relative degeneracy threshold")
    select_parser.add_argument("--test-index", type=int, default=0, help="Test point (influence)")
    select_parser.add_argument("--dump-kernel", help="Write the training kernel matrix as CSV")

    diagnose_parser = subparsers.add_parser("diagnose", parents=[common], help="Run numerical checks")
    diagnose_parser.add_argument("--suite", choices=["appendix", "core", "all"], default="all")
    diagnose_parser.add_argument("--instances", type=int, help="Random instances per brute-force check")

    experiment_parser = subparsers.add_parser("experiment", parents=[common], help="Run a workflow")
    experiment_parser.add_argument("experiment_file", help="Experiment JSON")
    experiment_parser.add_argument("--csv", help="Plot-ready curve CSV")
    experiment_parser.add_argument("--seeds", type=int, nargs="+", help="Seeds (overrides --seed)")

    subparsers.add_parser("version", help="Show version information")
    subparsers.add_parser("config", parents=[common], help="Show configuration information")
    return parser


def resolve_threads(args: argparse.Namespace, config_manager: ConfigManager) -> int:
    if getattr(args, "threads", None) is not None:
        return max(1, args.threads)
    env = os.environ.get("PROTOQUAD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning("Ignoring non-integer PROTOQUAD_THREADS=%r", env)
    return max(1, int(config_manager.get("performance.threads", 1)))


def setup_logging(level: str) -> None:
    handler = RichHandler(console=Console(stderr=True), show_time=False, show_path=False)
    root = logging.getLogger("protoquad")
    root.handlers = [handler]
    root.setLevel(level.upper())
    root.propagate = False


def emit(payload: Dict[str, Any], out: Optional[str]) -> None:
    """Write JSON to ``out`` or stdout (UTF-8, stable key order)."""
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)
            f.write("\n")
    else:
        sys.stdout.write(text + "\n")


def unlabelled(dataset: Dataset) -> Dataset:
    return Dataset(dataset.features, None, dataset.ids)


def cmd_train(args, config_manager: ConfigManager) -> int:
    embedding = config_manager.get_embedding_config()
    data = load_dataset(args.train)
    params = train_logistic(
        data,
        l2=args.l2 if args.l2 is not None else embedding.get("l2", 1e-2),
        tol=embedding.get("tol", 1e-8),
        max_iter=embedding.get("max_iter", 100),
        fit_intercept=embedding.get("fit_intercept", True),
    )
    emit(params.to_dict(), args.out)
    return EXIT_OK


def cmd_embed(args, config_manager: ConfigManager) -> int:
    if not args.out:
        raise UsageError("embed needs --out for the FISHGRAD file")
    embedding = config_manager.get_embedding_config()
    if args.params:
        with open(args.params, "r", encoding="utf-8") as f:
            embedder = LogisticEmbedder(params=ParamVector.from_dict(json.load(f)))
    elif args.train:
        embedder = LogisticEmbedder(l2=embedding.get("l2", 1e-2), tol=embedding.get("tol", 1e-8),
                                    max_iter=embedding.get("max_iter", 100),
                                    fit_intercept=embedding.get("fit_intercept", True))
        embedder.fit(load_dataset(args.train))
    else:
        raise UsageError("embed needs --params or --train")
    data = load_dataset(args.data, require_labels=not args.predicted_labels)
    if args.predicted_labels:
        data = unlabelled(data)
    save_embeddings(embedder.embed(data), args.out)
    return EXIT_OK


def _apply_select_overrides(args, config_manager: ConfigManager) -> None:
    overrides = {
        "embedding.ridge_coeff": args.ridge_coeff,
        "selection.k": args.k,
        "selection.delta": args.delta,
        "selection.partitions": args.partitions,
        "selection.tol_d": args.tol_d,
        "selection.tol_d_scale": args.tol_d_scale,
    }
    for key, value in overrides.items():
        if value is not None:
            config_manager.set(key, value)


def cmd_select(args, config_manager: ConfigManager) -> int:
    _apply_select_overrides(args, config_manager)
    if args.train_grads:
        embedder = UniversalEmbedder(provider="file", train_path=args.train_grads, test_path=args.test_grads)
        train = load_dataset(args.train) if args.train else None
        test = None
    elif args.train and args.test:
        embedder = None
        train = load_dataset(args.train)
        # attribution never reads the labels of the examples being explained
        test = unlabelled(load_dataset(args.test, require_labels=False))
    else:
        raise UsageError("select needs --train and --test, or --train-grads and --test-grads")

    pipeline = PrototypePipeline(config_manager, embedder=embedder, threads=args.threads)
    if args.method == "influence":
        k = args.k or config_manager.get("selection.k", 10)
        report = pipeline.influence(train, test, args.test_index, k)
    else:
        report = pipeline.explain(train, test, k=args.k, method=args.method, mode=args.mode, seed=args.seed)
    if args.dump_kernel:
        pipeline.oracle.dump_train_matrix(args.dump_kernel, config_manager.get("kernel.dump_limit", 10000))
    emit(report.to_dict(), args.out)
    return EXIT_OK


def cmd_diagnose(args, config_manager: ConfigManager) -> int:
    from protoquad.evaluation.diagnostics import DiagnosticSuite

    analysis = config_manager.get_analysis_config()
    suite = DiagnosticSuite(seed=args.seed,
                            instances=args.instances or analysis.get("instances", 20),
                            max_subsets=analysis.get("max_subsets", 1e6))
    results = suite.run(args.suite)
    suite.print_report(Console())
    if args.out:
        emit(DiagnosticSuite.deterministic_view(results), args.out)
    return EXIT_OK if results["passed"] else EXIT_DOMAIN


def cmd_experiment(args, config_manager: ConfigManager) -> int:
    from protoquad.workflows import run_experiment
    from protoquad.workflows.base import ExperimentConfig

    config = ExperimentConfig.from_json(args.experiment_file)
    if args.seeds:
        config.seeds = list(args.seeds)
    elif args.seed_given:
        config.seeds = [args.seed]
    config.threads = args.threads
    report = run_experiment(config)
    if args.csv:
        report.save_csv(args.csv)
    emit(report.to_dict(), args.out)
    return EXIT_OK


def cmd_config(args, config_manager: ConfigManager) -> int:
    console = Console()
    console.print(f"Config file: {config_manager.config_path}")
    for section in ("embedding", "kernel", "selection", "analysis", "logging", "performance"):
        console.print(f"  {section}: {config_manager.get(section, {})}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "embed": cmd_embed,
    "select": cmd_select,
    "diagnose": cmd_diagnose,
    "experiment": cmd_experiment,
    "config": cmd_config,
}


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv`` and run one subcommand.

    Returns:
        int: 0 on success, 1 on a domain error, 2 on a usage error
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    args.seed_given = getattr(args, "seed", None) is not None
    args.seed = args.seed if args.seed_given else 0

    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    if args.command == "version":
        print(f"ProtoQuad v{__version__}")
        return EXIT_OK

    load_dotenv()
    try:
        config_manager = ConfigManager(args.config)
        setup_logging(args.log_level or config_manager.get("logging.level", "INFO"))
        args.threads = resolve_threads(args, config_manager)
        return COMMANDS[args.command](args, config_manager)
    except UsageError as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except (ProtoQuadError, ValueError, OSError) as e:
        logger.error("%s", e)
        return EXIT_DOMAIN


def main():
    """Main CLI entry point."""
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
