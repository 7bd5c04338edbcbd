"""Temporal-window experiment harness: train and evaluate one model per (tp, seed) cell."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .constants import DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE, THREADS_ENV_VAR
from .errors import SolverDivergenceError, UsageError
from .fixed_point import SolverConfig
from .model import ModelConfig, ModelParams, grid_for_window
from .quadrature import CoordGrid
from .synthetic import DatasetKind, DatasetSpec, Recording, build_dataset, restrict_voxels, roi_indices, window_slice
from .task_strategies import TaskName, TaskStrategy, get_strategy
from .training import TrainConfig, TrainResult, train_model


logger = logging.getLogger(__name__)

# a cell fails when more than this share of its test windows diverge
FAILED_CELL_FRACTION = 0.5


class ExperimentConfig(BaseModel):
    """One sweep over temporal window lengths and seeds."""

    model_config = ConfigDict(extra="forbid")

    task: TaskName = "decode_classify"
    tp_values: list[int] = Field(min_length=1)
    seeds: list[int] = Field(min_length=1)
    epochs: int = Field(DEFAULT_EPOCHS, ge=1)
    batch_size: int = Field(DEFAULT_BATCH_SIZE, ge=1)
    learning_rate: float = Field(DEFAULT_LEARNING_RATE, gt=0.0)
    stride: int | None = Field(None, ge=1)
    test_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    roi_fraction: float = Field(1.0, gt=0.0, le=1.0)
    log_every: int = Field(10, ge=1)
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)

    @model_validator(mode="after")
    def _positive_windows(self) -> ExperimentConfig:
        if any(tp < 1 for tp in self.tp_values):
            raise ValueError("tp_values must all be >= 1")
        return self

    def stride_for(self, tp: int) -> int:
        """Configured stride, or half the window (at least 1)."""
        return self.stride if self.stride is not None else max(1, tp // 2)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=seed,
            log_every=self.log_every,
        )


@dataclass
class PreparedCell:
    train: list[Recording]
    test: list[Recording]
    grid: CoordGrid


@dataclass
class Evaluation:
    """Test-set outcome; ``metrics`` is None when the cell failed.

    ``extra`` carries scoring counts reported as diagnostics rather than metrics.
    """

    metrics: dict[str, float] | None
    n_test: int
    diverged: int
    not_converged: int
    solver_iters: float
    extra: dict[str, float] = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.metrics is None


@dataclass
class CellResult:
    tp: int
    seed: int
    evaluation: Evaluation
    training: TrainResult
    n_train: int

    @property
    def failed(self) -> bool:
        return self.evaluation.failed

    def diagnostics(self) -> dict[str, float]:
        return {
            "n_train": float(self.n_train),
            "n_test": float(self.evaluation.n_test),
            "diverged": float(self.evaluation.diverged),
            "not_converged": float(self.evaluation.not_converged),
            "solver_iters": self.evaluation.solver_iters,
            "final_loss": self.training.final_loss,
            "skipped_train_samples": float(self.training.skipped),
            **self.evaluation.extra,
        }


def split_windows(
    windows: Sequence[Recording], test_fraction: float, seed: int
) -> tuple[list[Recording], list[Recording]]:
    """Seeded shuffle, then the first ceil(test_fraction * n) windows go to the test set."""
    n = len(windows)
    if n < 2:
        raise UsageError(f"need at least 2 windows to split, got {n}")
    n_test = min(n - 1, max(1, int(math.ceil(test_fraction * n - 1e-9))))
    order = np.random.default_rng(seed).permutation(n)
    test = [windows[i] for i in sorted(order[:n_test])]
    train = [windows[i] for i in sorted(order[n_test:])]
    return train, test


def prepare_cell(
    cfg: ExperimentConfig, strategy: TaskStrategy, tp: int, seed: int, kind: DatasetKind | None = None
) -> PreparedCell:
    """Generate (or load) the recording, restrict to the ROI, window and split it.

    ``kind`` overrides the dataset kind the strategy trains on.
    """
    rec = build_dataset(cfg.dataset, kind or strategy.dataset_kind, seed, n_classes=cfg.model.n_classes)
    if cfg.roi_fraction < 1.0:
        rec = restrict_voxels(rec, roi_indices(rec.voxel_coords, cfg.roi_fraction))
    windows = window_slice(rec, tp, cfg.stride_for(tp))
    train, test = split_windows(windows, cfg.test_fraction, seed)
    return PreparedCell(train=train, test=test, grid=grid_for_window(windows[0], cfg.model.time_rule))


def evaluate_model(
    params: ModelParams,
    windows: Sequence[Recording],
    grid: CoordGrid,
    strategy: TaskStrategy,
) -> Evaluation:
    """Score ``params`` on ``windows``.

    Windows whose solve diverges are excluded from the metrics; when more than
    half of them diverge the evaluation is marked failed.

    Args:
        params: Trained parameters
        windows: Test windows matching ``grid``
        grid: Shared grid
        strategy: Task strategy

    Returns:
        Evaluation with metrics and solver diagnostics
    """
    predictions: list[Any] = []
    kept: list[Recording] = []
    iters: list[int] = []
    diverged = not_converged = 0
    for window in windows:
        try:
            prediction, solve = strategy.infer(params, window, grid)
        except SolverDivergenceError:
            diverged += 1
            continue
        predictions.append(prediction)
        kept.append(window)
        iters.append(solve.iters_used)
        not_converged += not solve.converged

    solver_iters = float(np.mean(iters)) if iters else math.nan
    if not kept or diverged > FAILED_CELL_FRACTION * len(windows):
        return Evaluation(None, len(windows), diverged, not_converged, solver_iters)
    scores = dict(strategy.score(predictions, kept))
    extra = {name: float(scores.pop(name)) for name in strategy.diagnostic_names}
    return Evaluation(scores, len(windows), diverged, not_converged, solver_iters, extra)


def run_cell(cfg: ExperimentConfig, tp: int, seed: int) -> CellResult:
    """Prepare, train and evaluate a single (tp, seed) cell."""
    strategy = get_strategy(cfg.task, cfg.model, cfg.solver)
    logger.info("cell tp=%d seed=%d: starting", tp, seed)
    cell = prepare_cell(cfg, strategy, tp, seed)
    params = ModelParams.init(cfg.model, np.random.default_rng([seed, tp]))
    training = train_model(params, cell.train, cell.grid, strategy, cfg.train_config(seed))
    evaluation = evaluate_model(training.params, cell.test, cell.grid, strategy)
    if evaluation.failed:
        logger.warning(
            "cell tp=%d seed=%d failed: %d of %d test windows diverged",
            tp, seed, evaluation.diverged, evaluation.n_test,
        )
    else:
        logger.info("cell tp=%d seed=%d: %s", tp, seed, evaluation.metrics)
    return CellResult(tp=tp, seed=seed, evaluation=evaluation, training=training, n_train=len(cell.train))


def resolve_threads(env: dict[str, str] | None = None) -> int:
    """Worker count from NIO_THREADS, defaulting to the number of logical cores."""
    env = os.environ if env is None else env
    raw = env.get(THREADS_ENV_VAR)
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        threads = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV_VAR} must be a positive integer, got {raw!r}") from None
    if threads < 1:
        raise UsageError(f"{THREADS_ENV_VAR} must be a positive integer, got {raw!r}")
    return threads


@dataclass(frozen=True)
class ReportRow:
    tp: int
    seed: int
    metric: str
    value: float


@dataclass(frozen=True)
class Aggregate:
    tp: int
    metric: str
    mean: float
    std: float
    n: int


@dataclass
class ExperimentReport:
    """Per-cell metric rows plus per-(tp, metric) mean and unbiased standard deviation."""

    task: str
    rows: list[ReportRow] = field(default_factory=list)
    aggregates: list[Aggregate] = field(default_factory=list)
    failed_cells: list[tuple[int, int]] = field(default_factory=list)
    diagnostics: list[ReportRow] = field(default_factory=list)

    def rows_csv(self) -> str:
        return _csv(("tp", "seed", "metric", "value"), [(r.tp, r.seed, r.metric, r.value) for r in self.rows])

    def aggregates_csv(self) -> str:
        return _csv(("tp", "metric", "mean", "std"), [(a.tp, a.metric, a.mean, a.std) for a in self.aggregates])

    def diagnostics_csv(self) -> str:
        return _csv(("tp", "seed", "metric", "value"), [(r.tp, r.seed, r.metric, r.value) for r in self.diagnostics])

    def to_json(self) -> str:
        document = {
            "task": self.task,
            "rows": [_json_record(r.__dict__) for r in self.rows],
            "aggregates": [_json_record(a.__dict__) for a in self.aggregates],
            "failed_cells": [{"tp": tp, "seed": seed} for tp, seed in self.failed_cells],
            "diagnostics": [_json_record(r.__dict__) for r in self.diagnostics],
        }
        return json.dumps(document, indent=2, allow_nan=False) + "\n"

    def mean(self, tp: int, metric: str) -> float:
        for aggregate in self.aggregates:
            if aggregate.tp == tp and aggregate.metric == metric:
                return aggregate.mean
        raise KeyError((tp, metric))


def _format(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv(header: Sequence[str], records: Sequence[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for record in records:
        writer.writerow([_format(value) for value in record])
    return buffer.getvalue()


def _json_record(record: dict[str, Any]) -> dict[str, Any]:
    return {key: None if isinstance(value, float) and not math.isfinite(value) else value for key, value in record.items()}


def assemble_report(cfg: ExperimentConfig, results: Sequence[CellResult]) -> ExperimentReport:
    """Merge cell results in (tp, seed) order and aggregate per (tp, metric)."""
    metric_names = get_strategy(cfg.task, cfg.model, cfg.solver).metric_names
    report = ExperimentReport(task=cfg.task)
    for result in sorted(results, key=lambda r: (r.tp, r.seed)):
        for name, value in result.diagnostics().items():
            report.diagnostics.append(ReportRow(result.tp, result.seed, name, float(value)))
        if result.failed:
            report.failed_cells.append((result.tp, result.seed))
            continue
        for name in metric_names:
            report.rows.append(ReportRow(result.tp, result.seed, name, float(result.evaluation.metrics[name])))

    for tp in cfg.tp_values:
        for name in metric_names:
            values = np.array([r.value for r in report.rows if r.tp == tp and r.metric == name])
            if values.size == 0:
                mean = std = math.nan
            else:
                mean = float(values.mean())
                std = float(values.std(ddof=1)) if values.size > 1 else 0.0
            report.aggregates.append(Aggregate(tp=tp, metric=name, mean=mean, std=std, n=int(values.size)))
    return report


def run_experiment(cfg: ExperimentConfig, max_workers: int | None = None) -> ExperimentReport:
    """Run every (tp, seed) cell, in parallel when allowed, and assemble the report.

    Args:
        cfg: Experiment configuration
        max_workers: Parallel cells; NIO_THREADS (or the core count) when None

    Returns:
        ExperimentReport, identical for identical configurations
    """
    cells = [(tp, seed) for tp in cfg.tp_values for seed in cfg.seeds]
    workers = min(len(cells), max_workers or resolve_threads())
    logger.info("running %d cells of task %s on %d worker(s)", len(cells), cfg.task, workers)
    if workers <= 1:
        results = [run_cell(cfg, tp, seed) for tp, seed in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda cell: run_cell(cfg, *cell), cells))
    return assemble_report(cfg, results)
