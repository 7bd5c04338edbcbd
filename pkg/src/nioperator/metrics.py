"""Classification and regression metrics."""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from .errors import DegenerateInputError, DimensionError, UsageError
from .tensor import Tensor


logger = logging.getLogger(__name__)


class ClassificationMetrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    accuracy: float
    precision: float
    recall: float
    f1: float


class RegressionMetrics(BaseModel):
    """Voxel-averaged scores; ``skipped_voxels`` counts zero-variance targets."""

    model_config = ConfigDict(frozen=True)

    r2_mean: float
    pearson_mean: float
    skipped_voxels: int = 0
    pearson_skipped: int = 0


def confusion_matrix(preds: Sequence[int] | np.ndarray, labels: Sequence[int] | np.ndarray, n_classes: int) -> np.ndarray:
    """Counts [n_classes x n_classes], rows = true label, columns = prediction."""
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if preds.shape != labels.shape:
        raise UsageError(f"{preds.size} predictions for {labels.size} labels")
    if n_classes < 1:
        raise UsageError(f"n_classes must be >= 1, got {n_classes}")
    for name, values in (("prediction", preds), ("label", labels)):
        if values.size and (values.min() < 0 or values.max() >= n_classes):
            raise UsageError(f"{name} out of range [0, {n_classes})")
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (labels, preds), 1)
    return matrix


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # 0/0 counts as 0
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def macro_metrics(
    preds: Sequence[int] | np.ndarray,
    labels: Sequence[int] | np.ndarray,
    n_classes: int,
) -> ClassificationMetrics:
    """Accuracy and macro-averaged precision, recall and F1.

    Every class weighs equally, including classes absent from both ``preds``
    and ``labels`` (they contribute 0).

    Args:
        preds: Predicted class ids
        labels: True class ids
        n_classes: Number of classes

    Returns:
        ClassificationMetrics
    """
    matrix = confusion_matrix(preds, labels, n_classes)
    total = matrix.sum()
    if total == 0:
        raise UsageError("macro_metrics needs at least one prediction")
    tp = np.diag(matrix).astype(np.float64)
    precision = _safe_ratio(tp, matrix.sum(axis=0).astype(np.float64))
    recall = _safe_ratio(tp, matrix.sum(axis=1).astype(np.float64))
    f1 = _safe_ratio(2.0 * precision * recall, precision + recall)
    return ClassificationMetrics(
        accuracy=float(tp.sum() / total),
        precision=float(precision.mean()),
        recall=float(recall.mean()),
        f1=float(f1.mean()),
    )


def _as_array(value: Tensor | np.ndarray) -> np.ndarray:
    return np.asarray(value.data if isinstance(value, Tensor) else value, dtype=np.float64)


def regression_metrics(pred: Tensor | np.ndarray, target: Tensor | np.ndarray) -> RegressionMetrics:
    """Per-voxel R^2 and Pearson r over time, averaged over voxels.

    Args:
        pred: Predicted signal [P x TP]
        target: Recorded signal [P x TP]

    Returns:
        RegressionMetrics; voxels whose target is constant are skipped for both
        scores, voxels whose prediction is constant are skipped for Pearson only
    """
    pred, target = _as_array(pred), _as_array(target)
    if pred.shape != target.shape or pred.ndim != 2:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} must be equal [P x TP] shapes")

    target_c = target - target.mean(axis=1, keepdims=True)
    pred_c = pred - pred.mean(axis=1, keepdims=True)
    ss_tot = (target_c**2).sum(axis=1)
    ss_res = ((target - pred) ** 2).sum(axis=1)
    ss_pred = (pred_c**2).sum(axis=1)

    valid = ss_tot > 0
    if not valid.any():
        raise DegenerateInputError("every target voxel has zero variance")
    skipped = int((~valid).sum())
    if skipped:
        logger.warning("skipped %d zero-variance target voxels", skipped)

    r2 = 1.0 - ss_res[valid] / ss_tot[valid]
    pearson_ok = valid & (ss_pred > 0)
    r = (pred_c * target_c).sum(axis=1)[pearson_ok] / np.sqrt(ss_pred[pearson_ok] * ss_tot[pearson_ok])
    return RegressionMetrics(
        r2_mean=float(r2.mean()),
        pearson_mean=float(r.mean()) if r.size else float("nan"),
        skipped_voxels=skipped,
        pearson_skipped=int(valid.sum() - pearson_ok.sum()),
    )
