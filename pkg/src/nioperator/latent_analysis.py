"""Latent-space structure: PCA, Monte Carlo KNN accuracy, Welch's t-test and 2-D embeddings."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.spatial.distance import cdist
from scipy.stats import t as student_t
from sklearn.decomposition import PCA

from .constants import DEFAULT_KNN_NEIGHBORS, DEFAULT_KNN_SPLITS, DEFAULT_KNN_TEST_FRACTION, PCA_INTERMEDIATE_DIMS
from .errors import DegenerateInputError, DimensionError, UsageError
from .fixed_point import SolverConfig
from .model import ModelParams, pooled_latent
from .quadrature import CoordGrid
from .synthetic import Recording


logger = logging.getLogger(__name__)

EmbeddingSource = Literal["raw_data", "model_latent"]


@dataclass(frozen=True)
class EmbeddingSet:
    """Points [n x d] with binary category labels (0 random, 1 geometric).

    ``ids`` are stable point identities; Monte Carlo splits are drawn over them.
    """

    points: np.ndarray
    labels: np.ndarray
    source: EmbeddingSource
    ids: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.points.ndim != 2:
            raise DimensionError(f"points must be [n x d], got {self.points.shape}")
        if self.labels.shape != (self.points.shape[0],):
            raise DimensionError(f"{self.labels.shape[0]} labels for {self.points.shape[0]} points")
        if self.ids is None:
            object.__setattr__(self, "ids", np.arange(self.points.shape[0]))
        elif self.ids.shape != self.labels.shape or np.unique(self.ids).size != self.ids.size:
            raise UsageError("ids must be unique, one per point")

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class PCAResult:
    components: np.ndarray
    projected: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray
    mean: np.ndarray


def pca(X: np.ndarray, n_components: int) -> PCAResult:
    """Principal components of mean-centred X.

    Each component is flipped so its largest-magnitude entry is positive.

    Args:
        X: Data [n x d], n >= 2
        n_components: 1 <= n_components <= min(n, d)

    Returns:
        PCAResult with orthonormal components [n_components x d], projections
        [n x n_components] and nonincreasing explained variance
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"pca needs a 2-D array, got shape {X.shape}")
    n, d = X.shape
    if n < 2:
        raise UsageError(f"pca needs at least 2 points, got {n}")
    if not 1 <= n_components <= min(n, d):
        raise UsageError(f"n_components={n_components} must lie in [1, {min(n, d)}]")

    model = PCA(n_components=n_components, svd_solver="full").fit(X)
    components = np.array(model.components_)
    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.where(components[np.arange(n_components), pivots] < 0, -1.0, 1.0)
    components *= signs[:, None]
    mean = X.mean(axis=0)
    return PCAResult(
        components=components,
        projected=(X - mean) @ components.T,
        explained_variance=np.array(model.explained_variance_),
        explained_variance_ratio=np.array(model.explained_variance_ratio_),
        mean=mean,
    )


class KNNReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean_acc: float
    std_acc: float
    per_split: list[float]


def _split_ids(ids: np.ndarray, n_test: int, seed: int, split: int) -> np.ndarray:
    # draws depend only on the sorted identities, not on row order
    shuffled = np.random.default_rng([seed, split]).permutation(np.sort(ids))
    return shuffled[:n_test]


def knn_predict(
    train_points: np.ndarray,
    train_labels: np.ndarray,
    train_ids: np.ndarray,
    query: np.ndarray,
    k: int,
) -> np.ndarray:
    """Majority vote of the k Euclidean nearest neighbours.

    Distance ties go to the lower identity, vote ties to the lower label.
    """
    distances = cdist(query, train_points)
    n_labels = int(train_labels.max()) + 1
    votes = np.empty(query.shape[0], dtype=np.int64)
    for row, dist in enumerate(distances):
        nearest = np.lexsort((train_ids, dist))[:k]
        votes[row] = int(np.argmax(np.bincount(train_labels[nearest], minlength=n_labels)))
    return votes


def knn_eval(
    embedding: EmbeddingSet,
    k: int = DEFAULT_KNN_NEIGHBORS,
    n_splits: int = DEFAULT_KNN_SPLITS,
    test_frac: float = DEFAULT_KNN_TEST_FRACTION,
    seed: int = 0,
) -> KNNReport:
    """KNN accuracy over seeded Monte Carlo train/test splits.

    Args:
        embedding: Points, labels and identities
        k: Neighbours per vote
        n_splits: Number of random splits
        test_frac: Share of points held out per split
        seed: Split seed

    Returns:
        KNNReport with mean, unbiased std and per-split accuracies
    """
    if k < 1 or n_splits < 1 or not 0.0 < test_frac < 1.0:
        raise UsageError(f"invalid KNN settings: k={k}, n_splits={n_splits}, test_frac={test_frac}")
    n = embedding.n_points
    n_test = max(1, int(round(test_frac * n)))
    if n - n_test < k:
        raise UsageError(f"train split of {n - n_test} points is smaller than k={k}")

    labels = np.asarray(embedding.labels, dtype=np.int64)
    accuracies: list[float] = []
    for split in range(n_splits):
        is_test = np.isin(embedding.ids, _split_ids(embedding.ids, n_test, seed, split))
        votes = knn_predict(
            embedding.points[~is_test], labels[~is_test], embedding.ids[~is_test], embedding.points[is_test], k
        )
        accuracies.append(float(np.mean(votes == labels[is_test])))

    values = np.array(accuracies)
    return KNNReport(
        mean_acc=float(values.mean()),
        std_acc=float(values.std(ddof=1)) if n_splits > 1 else 0.0,
        per_split=accuracies,
    )


class WelchResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: float
    dof: float
    p_two_sided: float


def welch_ttest(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> WelchResult:
    """Two-sample t-test with unequal variances and Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size < 2 or b.size < 2:
        raise UsageError(f"welch_ttest needs at least 2 values per sample, got {a.size} and {b.size}")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    if va == 0.0 and vb == 0.0:
        raise DegenerateInputError("both samples have zero variance")
    t_stat = float((a.mean() - b.mean()) / math.sqrt(va + vb))
    dof = float((va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1)))
    p = float(min(1.0, 2.0 * student_t.sf(abs(t_stat), dof)))
    return WelchResult(t=t_stat, dof=dof, p_two_sided=p)


def embed_2d(embedding: EmbeddingSet) -> np.ndarray:
    """Project points to 2-D with PCA, through a 100-dimensional PCA stage when d > 100."""
    points = np.asarray(embedding.points, dtype=np.float64)
    if embedding.n_points < 3:
        raise UsageError(f"embed_2d needs at least 3 points, got {embedding.n_points}")
    if points.shape[1] > PCA_INTERMEDIATE_DIMS:
        points = pca(points, min(PCA_INTERMEDIATE_DIMS, embedding.n_points)).projected
    return pca(points, 2).projected


def extract_latents(
    params: ModelParams,
    windows: Sequence[Recording],
    grid: CoordGrid,
    solver_cfg: SolverConfig,
    ids: np.ndarray | None = None,
) -> EmbeddingSet:
    """Pooled u* of every window, labelled by the window's last-frame category."""
    points = np.stack([pooled_latent(params, window, grid, solver_cfg) for window in windows])
    labels = np.array([window.label for window in windows], dtype=np.int64)
    return EmbeddingSet(points=points, labels=labels, source="model_latent", ids=ids)


def raw_representations(windows: Sequence[Recording], ids: np.ndarray | None = None) -> EmbeddingSet:
    """Flattened windows [P*TP], centred on the mean over all windows."""
    flat = np.stack([window.signal.reshape(-1) for window in windows])
    labels = np.array([window.label for window in windows], dtype=np.int64)
    return EmbeddingSet(points=flat - flat.mean(axis=0), labels=labels, source="raw_data", ids=ids)


class RepresentationComparison(BaseModel):
    """KNN accuracy on raw windows and model latents, and Welch's test on the per-split accuracies."""

    model_config = ConfigDict(frozen=True)

    raw: KNNReport
    latent: KNNReport
    welch: WelchResult | None


def compare_representations(
    raw: EmbeddingSet,
    latent: EmbeddingSet,
    k: int = DEFAULT_KNN_NEIGHBORS,
    n_splits: int = DEFAULT_KNN_SPLITS,
    test_frac: float = DEFAULT_KNN_TEST_FRACTION,
    seed: int = 0,
) -> RepresentationComparison:
    if not np.array_equal(raw.labels, latent.labels):
        raise UsageError("raw and latent embeddings must describe the same points")
    raw_report = knn_eval(raw, k, n_splits, test_frac, seed)
    latent_report = knn_eval(latent, k, n_splits, test_frac, seed)
    try:
        welch = welch_ttest(latent_report.per_split, raw_report.per_split) if n_splits > 1 else None
    except DegenerateInputError:
        logger.warning("per-split accuracies have zero variance for both sources; skipping Welch's test")
        welch = None
    return RepresentationComparison(raw=raw_report, latent=latent_report, welch=welch)


EMBEDDING_CSV_HEADER = ("x", "y", "label", "source")


@dataclass(frozen=True)
class EmbeddingPoint:
    x: float
    y: float
    label: int
    source: str


def embedding_csv(embedding: EmbeddingSet, coords_2d: np.ndarray | None = None) -> str:
    """CSV ``x,y,label,source`` of the 2-D embedding (computed with embed_2d when not given)."""
    coords_2d = embed_2d(embedding) if coords_2d is None else np.asarray(coords_2d, dtype=np.float64)
    if coords_2d.shape != (embedding.n_points, 2):
        raise DimensionError(f"2-D coordinates {coords_2d.shape} do not match {embedding.n_points} points")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(EMBEDDING_CSV_HEADER)
    for (x, y), label in zip(coords_2d, embedding.labels):
        writer.writerow([repr(float(x)), repr(float(y)), int(label), embedding.source])
    return buffer.getvalue()


def read_embedding_csv(path: Path | str) -> list[EmbeddingPoint]:
    with Path(path).open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != EMBEDDING_CSV_HEADER:
            raise UsageError(f"{path}: expected header {','.join(EMBEDDING_CSV_HEADER)}")
        try:
            return [
                EmbeddingPoint(float(row["x"]), float(row["y"]), int(row["label"]), row["source"])
                for row in reader
            ]
        except (TypeError, ValueError) as e:
            raise UsageError(f"{path}: malformed embedding row: {e}") from e

