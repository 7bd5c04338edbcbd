"""Strategy pattern for the decoding and encoding tasks."""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Sequence
from typing import Any, ClassVar, Literal

import numpy as np

from .errors import UsageError
from .fixed_point import FixedPointResult, SolverConfig
from .metrics import macro_metrics, regression_metrics
from .model import ModelConfig, ModelParams, classify, decode_pass, encode_pass, predict_stimulus
from .quadrature import CoordGrid
from .synthetic import DatasetKind, Recording
from .tensor import Tensor
from .training import loss


TaskName = Literal["decode_classify", "decode_pixels", "encode"]


class TaskStrategy(ABC):
    """Abstract base class for task strategies."""

    name: ClassVar[TaskName]
    dataset_kind: ClassVar[DatasetKind]
    metric_names: ClassVar[tuple[str, ...]]
    # keys of score() that are counts, not metrics
    diagnostic_names: ClassVar[tuple[str, ...]] = ()

    def __init__(self, model_cfg: ModelConfig, solver_cfg: SolverConfig):
        """Initialize the task strategy.

        Args:
            model_cfg: Architecture hyperparameters
            solver_cfg: Fixed-point solver configuration
        """
        self.model_cfg = model_cfg
        self.solver_cfg = solver_cfg

    @abstractmethod
    def sample_loss(self, params: ModelParams, window: Recording, grid: CoordGrid) -> Tensor:
        """Scalar training loss of one window."""

    @abstractmethod
    def infer(self, params: ModelParams, window: Recording, grid: CoordGrid) -> tuple[Any, FixedPointResult]:
        """Task prediction for one window plus the solve that produced it.

        Raises:
            SolverDivergenceError: the fixed-point solve blew up
        """

    @abstractmethod
    def score(self, predictions: Sequence[Any], windows: Sequence[Recording]) -> dict[str, float]:
        """Metrics over aligned predictions and windows, keyed by ``metric_names`` plus ``diagnostic_names``."""

    def predict(self, params: ModelParams, window: Recording, grid: CoordGrid) -> Any:
        prediction, _ = self.infer(params, window, grid)
        return prediction


class ClassifyTask(TaskStrategy):
    """Decode the class shown at the last frame of a window."""

    name = "decode_classify"
    dataset_kind = "classification"
    metric_names = ("accuracy", "precision", "recall", "f1")

    def sample_loss(self, params: ModelParams, window: Recording, grid: CoordGrid) -> Tensor:
        logits = decode_pass(params, window, grid, self.solver_cfg, task="classify").logits
        return loss("cross_entropy", logits, window.label)

    def infer(self, params: ModelParams, window: Recording, grid: CoordGrid) -> tuple[int, FixedPointResult]:
        result = decode_pass(params, window, grid, self.solver_cfg, task="classify")
        label, _ = classify(result.logits)
        return label, result.solve

    def score(self, predictions: Sequence[int], windows: Sequence[Recording]) -> dict[str, float]:
        labels = [window.label for window in windows]
        return macro_metrics(predictions, labels, self.model_cfg.n_classes).model_dump()


class PixelsTask(TaskStrategy):
    """Decode the 10x10 binary stimulus shown at the last frame of a window.

    Scored as two-class (black/white) macro metrics over every test pixel.
    """

    name = "decode_pixels"
    dataset_kind = "stimulus"
    metric_names = ("accuracy", "precision", "recall", "f1")

    def sample_loss(self, params: ModelParams, window: Recording, grid: CoordGrid) -> Tensor:
        logits = decode_pass(params, window, grid, self.solver_cfg, task="pixels").logits
        return loss("bce_pixels", logits, window.stimulus)

    def infer(self, params: ModelParams, window: Recording, grid: CoordGrid) -> tuple[np.ndarray, FixedPointResult]:
        result = decode_pass(params, window, grid, self.solver_cfg, task="pixels")
        _, binary = predict_stimulus(result.logits)
        return binary, result.solve

    def score(self, predictions: Sequence[np.ndarray], windows: Sequence[Recording]) -> dict[str, float]:
        pixels = np.concatenate([np.asarray(p, dtype=np.int64) for p in predictions])
        targets = np.concatenate([window.stimulus.astype(np.int64) for window in windows])
        return macro_metrics(pixels, targets, 2).model_dump()


class EncodeTask(TaskStrategy):
    """Predict a BOLD window from its stimulus frames."""

    name = "encode"
    dataset_kind = "stimulus"
    metric_names = ("r2_mean", "pearson_mean")
    diagnostic_names = ("skipped_voxels", "pearson_skipped")

    @staticmethod
    def _stimuli(window: Recording) -> np.ndarray:
        if window.stimuli is None:
            raise UsageError("encoding needs recordings that carry stimuli")
        return window.stimuli

    def sample_loss(self, params: ModelParams, window: Recording, grid: CoordGrid) -> Tensor:
        prediction = encode_pass(params, self._stimuli(window), grid, self.solver_cfg).prediction
        return loss("mse", prediction, window.signal)

    def infer(self, params: ModelParams, window: Recording, grid: CoordGrid) -> tuple[np.ndarray, FixedPointResult]:
        result = encode_pass(params, self._stimuli(window), grid, self.solver_cfg)
        return result.prediction.numpy(), result.solve

    def score(self, predictions: Sequence[np.ndarray], windows: Sequence[Recording]) -> dict[str, float]:
        # test windows are concatenated along time before scoring per voxel
        pred = np.concatenate(list(predictions), axis=1)
        target = np.concatenate([window.signal for window in windows], axis=1)
        scores = regression_metrics(pred, target)
        return scores.model_dump()


_STRATEGIES: dict[str, type[TaskStrategy]] = {
    strategy.name: strategy for strategy in (ClassifyTask, PixelsTask, EncodeTask)
}


def get_strategy(task: TaskName, model_cfg: ModelConfig, solver_cfg: SolverConfig) -> TaskStrategy:
    try:
        strategy_cls = _STRATEGIES[task]
    except KeyError:
        raise UsageError(f"unknown task: {task}") from None
    return strategy_cls(model_cfg, solver_cfg)
