"""Command-line entry point: synth, train, eval, sweep, embed and plot."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import NoReturn

import numpy as np

from .config import RunConfig, parse_config
from .constants import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE
from .errors import ConfigError, NIOperatorError, UsageError
from .experiment import evaluate_model, prepare_cell, run_experiment
from .latent_analysis import (
    compare_representations,
    embed_2d,
    embedding_csv,
    extract_latents,
    raw_representations,
    read_embedding_csv,
)
from .model import ModelParams, load_checkpoint, save_checkpoint
from .output_writer import OutputDirectory
from .plotting import render_scatter_svg
from .synthetic import CATEGORY_GEOMETRIC, CATEGORY_RANDOM, DatasetKind, build_dataset, save_recording
from .task_strategies import get_strategy
from .training import TrainResult, train_model


logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
DECODING_TASKS = ("decode_classify", "decode_pixels")


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser that raises UsageError instead of exiting on bad arguments."""

    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.prog}: {message}")


def setup_logging(verbose: bool = False) -> logging.Handler:
    """Attach a single stderr handler to the package logger."""
    package_logger = logging.getLogger("nioperator")
    for handler in list(package_logger.handlers):
        if getattr(handler, "_nioperator_cli", False):
            package_logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._nioperator_cli = True
    package_logger.addHandler(handler)
    package_logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    return handler


def _train_cell(config: RunConfig, kind: DatasetKind | None = None) -> tuple[TrainResult, int, int]:
    tp, seed = config.tp_values[0], config.seeds[0]
    strategy = get_strategy(config.task, config.model, config.solver)
    cell = prepare_cell(config, strategy, tp, seed, kind)
    params = ModelParams.init(config.model, np.random.default_rng([seed, tp]))
    return train_model(params, cell.train, cell.grid, strategy, config.train_config(seed)), tp, seed


def cmd_synth(args: argparse.Namespace) -> int:
    config = parse_config(args.config)
    strategy = get_strategy(config.task, config.model, config.solver)
    seed = config.seeds[0] if args.seed is None else args.seed
    kind = args.kind or strategy.dataset_kind
    recording = build_dataset(config.dataset, kind, seed, n_classes=config.model.n_classes)
    path = save_recording(config.output().path(args.name), recording)
    logger.info("wrote %s dataset %s (%d voxels x %d frames)", kind, path, recording.n_voxels, recording.n_frames)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = parse_config(args.config)
    out = config.output()
    result, tp, seed = _train_cell(config)
    checkpoint = save_checkpoint(
        out.path(args.name), result.params, config.model, config.solver,
        extra={"task": config.task, "tp": tp, "seed": seed, "epochs": config.epochs},
    )
    rows = ["epoch,loss,steps,skipped"]
    rows += [f"{e.epoch},{e.loss!r},{e.steps},{e.skipped}" for e in result.history]
    out.write_text("loss_log.csv", "\n".join(rows) + "\n")
    logger.info("wrote checkpoint %s", checkpoint)
    return EXIT_OK


def _checkpoint_path(args: argparse.Namespace, config: RunConfig) -> Path:
    raw = args.checkpoint or config.checkpoint
    if raw is None:
        raise UsageError("no checkpoint given: pass --checkpoint or set \"checkpoint\" in the config")
    return Path(raw)


def cmd_eval(args: argparse.Namespace) -> int:
    config = parse_config(args.config)
    params, model_cfg, solver_cfg, info = load_checkpoint(_checkpoint_path(args, config))
    if info.get("task", config.task) != config.task:
        raise UsageError(f"checkpoint was trained for task {info['task']!r}, config asks for {config.task!r}")
    strategy = get_strategy(config.task, model_cfg, solver_cfg)
    tp = int(info.get("tp", config.tp_values[0]))
    seed = int(info.get("seed", config.seeds[0]))
    cell = prepare_cell(config.model_copy(update={"model": model_cfg}), strategy, tp, seed)
    evaluation = evaluate_model(params, cell.test, cell.grid, strategy)

    metrics = evaluation.metrics or {}
    diagnostics = {
        "n_test": evaluation.n_test,
        "diverged": evaluation.diverged,
        "not_converged": evaluation.not_converged,
        "solver_iters": evaluation.solver_iters if math.isfinite(evaluation.solver_iters) else None,
        **evaluation.extra,
    }
    out = config.output()
    out.write_text("metrics.csv", "metric,value\n" + "".join(f"{k},{v!r}\n" for k, v in metrics.items()))
    document = {"task": config.task, "tp": tp, "seed": seed, "failed": evaluation.failed,
                "metrics": metrics, "diagnostics": diagnostics}
    out.write_text("metrics.json", json.dumps(document, indent=2, sort_keys=True) + "\n")
    if evaluation.failed:
        logger.warning("evaluation failed: %d of %d test windows diverged", evaluation.diverged, evaluation.n_test)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = parse_config(args.config)
    report = run_experiment(config, max_workers=args.workers)
    out = config.output()
    out.write_text("report.csv", report.rows_csv())
    out.write_text("aggregates.csv", report.aggregates_csv())
    out.write_text("diagnostics.csv", report.diagnostics_csv())
    out.write_text("report.json", report.to_json())
    if report.failed_cells:
        logger.warning("%d cell(s) failed: %s", len(report.failed_cells), report.failed_cells)
    return EXIT_OK


def cmd_embed(args: argparse.Namespace) -> int:
    config = parse_config(args.config)
    if args.checkpoint or config.checkpoint:
        params, model_cfg, solver_cfg, info = load_checkpoint(_checkpoint_path(args, config))
        if info.get("task", "decode_classify") not in DECODING_TASKS:
            raise UsageError(f"embed needs a decoding checkpoint, got one trained for {info['task']!r}")
        tp = int(info.get("tp", config.tp_values[0]))
        seed = int(info.get("seed", config.seeds[0]))
        config = config.model_copy(update={"model": model_cfg, "solver": solver_cfg})
    else:
        # a two-class decoder trained on the stimulus categories themselves
        config = config.model_copy(update={
            "task": "decode_classify", "model": config.model.model_copy(update={"n_classes": 2}),
        })
        result, tp, seed = _train_cell(config, kind="stimulus")
        params = result.params

    strategy = get_strategy(config.task, config.model, config.solver)
    cell = prepare_cell(config, strategy, tp, seed, kind="stimulus")
    labels = {window.label for window in cell.test}
    if not labels <= {CATEGORY_RANDOM, CATEGORY_GEOMETRIC}:
        raise UsageError(f"embed needs random (0) / geometric (1) category labels, found {sorted(labels)}")
    ids = np.array([window.meta.offset for window in cell.test])
    raw = raw_representations(cell.test, ids=ids)
    latent = extract_latents(params, cell.test, cell.grid, config.solver, ids=ids)
    comparison = compare_representations(
        raw, latent, config.knn_neighbors, config.knn_splits, config.knn_test_fraction, seed
    )

    out = config.output()
    raw_csv = embedding_csv(raw, embed_2d(raw))
    latent_csv = embedding_csv(latent, embed_2d(latent))
    # one header, raw rows then latent rows
    out.write_text("embedding.csv", raw_csv + latent_csv.split("\n", 1)[1])
    document = {"tp": tp, "seed": seed, "n_points": raw.n_points, **comparison.model_dump()}
    out.write_text("knn.json", json.dumps(document, indent=2, sort_keys=True) + "\n")
    logger.info(
        "KNN accuracy raw %.4f, latent %.4f", comparison.raw.mean_acc, comparison.latent.mean_acc
    )
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    points = read_embedding_csv(args.input)
    if args.source != "all":
        points = [p for p in points if p.source == args.source]
    destination = Path(args.output)
    svg = render_scatter_svg(points, title=args.title)
    OutputDirectory(destination.parent).write_text(destination.name, svg)
    logger.info("wrote %d points to %s", len(points), destination)
    return EXIT_OK


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="nioperator",
        description="Latent neural integral operators for spatiotemporal signal encoding and decoding.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    def with_config(name: str, help_text: str) -> ArgumentParser:
        command = sub.add_parser(name, help=help_text, description=help_text)
        command.add_argument("--config", required=True, help="JSON run configuration file")
        return command

    synth = with_config("synth", "generate a synthetic dataset container")
    synth.add_argument("--kind", choices=["classification", "stimulus"], default=None,
                       help="dataset kind (default: the one the configured task needs)")
    synth.add_argument("--seed", type=int, default=None, help="generator seed (default: first config seed)")
    synth.add_argument("--name", default="dataset.niot", help="output file name inside the output directory")
    synth.set_defaults(handler=cmd_synth)

    train = with_config("train", "train one model on the first (tp, seed) of the config")
    train.add_argument("--name", default="checkpoint.niot", help="checkpoint file name inside the output directory")
    train.set_defaults(handler=cmd_train)

    evaluate = with_config("eval", "evaluate a checkpoint on its test split")
    evaluate.add_argument("--checkpoint", default=None, help="checkpoint file (default: config checkpoint)")
    evaluate.set_defaults(handler=cmd_eval)

    sweep = with_config("sweep", "run the experiment over every tp value and seed")
    sweep.add_argument("--workers", type=int, default=None,
                       help="parallel cells (default: NIO_THREADS or the core count)")
    sweep.set_defaults(handler=cmd_sweep)

    embed = with_config("embed", "compare KNN accuracy of raw windows and model latents")
    embed.add_argument("--checkpoint", default=None,
                       help="trained checkpoint (default: config checkpoint, else train one first)")
    embed.set_defaults(handler=cmd_embed)

    plot = sub.add_parser("plot", help="render an embedding CSV as an SVG scatter",
                          description="render an embedding CSV as an SVG scatter")
    plot.add_argument("--in", dest="input", required=True, help="embedding CSV (x,y,label,source)")
    plot.add_argument("--out", dest="output", required=True, help="SVG file to write")
    plot.add_argument("--source", choices=["all", "raw_data", "model_latent"], default="all",
                      help="plot only the rows of one source")
    plot.add_argument("--title", default="", help="caption above the plot")
    plot.set_defaults(handler=cmd_plot)
    return parser


def run_command(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv`` and run the subcommand.

    Returns:
        0 on success, 1 on usage or config errors, 2 on runtime failures
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    setup_logging(args.verbose)
    try:
        return args.handler(args)
    except (UsageError, ConfigError) as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except (NIOperatorError, OSError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run_command())
