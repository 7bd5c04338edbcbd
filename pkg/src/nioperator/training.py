"""Losses, the Adam optimizer and the mini-batch training loop."""

from __future__ import annotations

import logging
import math
import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .constants import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPSILON,
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    DEFAULT_LEARNING_RATE,
)
from .errors import DimensionError, SolverDivergenceError, UsageError
from .model import ModelParams
from .quadrature import CoordGrid
from .synthetic import Recording
from .tensor import Tape, Tensor, as_tensor, log_softmax, softplus, square

if TYPE_CHECKING:
    from .task_strategies import TaskStrategy


logger = logging.getLogger(__name__)

LossKind = Literal["cross_entropy", "bce_pixels", "mse"]


def loss(kind: LossKind, pred: Tensor, target: int | np.ndarray | Tensor) -> Tensor:
    """Scalar training loss.

    Args:
        kind: "cross_entropy" (1-D logits, class id), "bce_pixels" (logits and
            binary targets of equal shape) or "mse" (tensors of equal shape)
        pred: Prediction tensor
        target: Target

    Returns:
        Scalar tensor recorded on the active tape
    """
    if kind == "cross_entropy":
        logits = pred.reshape(-1)
        n_classes = logits.shape[0]
        if isinstance(target, Tensor) or np.ndim(target) != 0:
            raise DimensionError(f"cross_entropy target must be a class id, got shape {np.shape(target)}")
        if not 0 <= int(target) < n_classes:
            raise UsageError(f"class id {target} out of range for {n_classes} logits")
        onehot = np.zeros(n_classes)
        onehot[int(target)] = 1.0
        return -(log_softmax(logits, axis=0) * onehot).sum()

    target_data = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if pred.shape != target_data.shape:
        raise DimensionError(f"{kind}: prediction {pred.shape} and target {target_data.shape} differ")
    if kind == "bce_pixels":
        # log(1 + e^z) - y z, the logit-space form of binary cross-entropy
        return (softplus(pred) - pred * target_data).mean()
    if kind == "mse":
        return square(pred - as_tensor(target)).mean()
    raise UsageError(f"unknown loss kind: {kind}")


class AdamHyper(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    lr: float = Field(DEFAULT_LEARNING_RATE, gt=0.0)
    beta1: float = Field(ADAM_BETA1, ge=0.0, lt=1.0)
    beta2: float = Field(ADAM_BETA2, ge=0.0, lt=1.0)
    eps: float = Field(ADAM_EPSILON, gt=0.0)


@dataclass
class AdamState:
    """First and second moment estimates keyed by parameter name."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> AdamState:
        return cls(
            m={name: np.zeros_like(value) for name, value in params.items()},
            v={name: np.zeros_like(value) for name, value in params.items()},
        )


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    hyper: AdamHyper,
    t: int,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; inputs are left untouched.

    Args:
        params: Parameter arrays by name
        grads: Gradient arrays, same names and shapes
        state: Moments from the previous step
        hyper: Learning rate, betas and epsilon
        t: Step number, starting at 1

    Returns:
        Updated parameters and the new state
    """
    if t < 1:
        raise UsageError(f"adam step number must be >= 1, got {t}")
    if params.keys() != grads.keys():
        raise DimensionError(f"gradient names {sorted(grads)} do not match parameters {sorted(params)}")

    bc1 = 1.0 - hyper.beta1**t
    bc2 = 1.0 - hyper.beta2**t
    new_params: dict[str, np.ndarray] = {}
    new_state = AdamState(t=t)
    for name, value in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m_prev = state.m.get(name, np.zeros_like(value))
        v_prev = state.v.get(name, np.zeros_like(value))
        if not value.shape == g.shape == m_prev.shape == v_prev.shape:
            raise DimensionError(
                f"adam shapes differ for {name}: param {value.shape}, grad {g.shape}, moments {m_prev.shape}"
            )
        m = hyper.beta1 * m_prev + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * v_prev + (1.0 - hyper.beta2) * (g * g)
        new_params[name] = value - hyper.lr * (m / bc1) / (np.sqrt(v / bc2) + hyper.eps)
        new_state.m[name] = m
        new_state.v[name] = v
    return new_params, new_state


class AdamOptimizer:
    """Stateful wrapper around adam_step that counts steps."""

    def __init__(self, params: Mapping[str, np.ndarray], hyper: AdamHyper | None = None):
        self.hyper = hyper or AdamHyper()
        self.state = AdamState.zeros_like(params)

    def step(
        self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]
    ) -> dict[str, np.ndarray]:
        new_params, self.state = adam_step(params, grads, self.state, self.hyper, self.state.t + 1)
        return new_params


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    epochs: int = Field(DEFAULT_EPOCHS, ge=1)
    batch_size: int = Field(DEFAULT_BATCH_SIZE, ge=1)
    learning_rate: float = Field(DEFAULT_LEARNING_RATE, gt=0.0)
    seed: int = 0
    log_every: int = Field(10, ge=1)


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    loss: float
    steps: int
    skipped: int


@dataclass
class TrainResult:
    params: ModelParams
    history: list[EpochLog] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.history[-1].loss if self.history else math.nan

    @property
    def skipped(self) -> int:
        return sum(entry.skipped for entry in self.history)


def train_step(
    params: ModelParams,
    batch: Sequence[Recording],
    grid: CoordGrid,
    strategy: TaskStrategy,
    optimizer: AdamOptimizer,
) -> tuple[ModelParams, float, int]:
    """Average the strategy loss over a batch and apply one Adam update.

    Samples whose solve diverges are dropped from the batch. Returns the new
    parameters, the batch loss (NaN when every sample diverged) and the
    number of dropped samples.
    """
    skipped = 0
    with Tape() as tape:
        trainable = params.trainable()
        losses: list[Tensor] = []
        for window in batch:
            try:
                losses.append(strategy.sample_loss(trainable, window, grid))
            except SolverDivergenceError as e:
                skipped += 1
                warnings.warn(f"skipping training sample at offset {window.meta.offset}: {e}")
        if not losses:
            return params, math.nan, skipped

        total = losses[0]
        for sample_loss in losses[1:]:
            total = total + sample_loss
        batch_loss = total / float(len(losses))
        grads = tape.backward(batch_loss)

    named = trainable.named_tensors()
    arrays = {name: tensor.numpy() for name, tensor in named.items()}
    gradients = {name: grads.wrt(tensor) for name, tensor in named.items()}
    updated = optimizer.step(arrays, gradients)
    return ModelParams.from_named(updated), batch_loss.item(), skipped


def train_model(
    params: ModelParams,
    windows: Sequence[Recording],
    grid: CoordGrid,
    strategy: TaskStrategy,
    cfg: TrainConfig | None = None,
) -> TrainResult:
    """Mini-batch Adam over ``windows``, reshuffled each epoch from ``cfg.seed``.

    Args:
        params: Initial parameters
        windows: Training windows, all matching ``grid``
        grid: Grid shared by every window
        strategy: Task strategy providing the per-sample loss
        cfg: Training configuration

    Returns:
        TrainResult with the final parameters and one EpochLog per epoch
    """
    cfg = cfg or TrainConfig()
    if not windows:
        raise UsageError("train_model needs at least one training window")

    rng = np.random.default_rng(cfg.seed)
    optimizer = AdamOptimizer(params.named_arrays(), AdamHyper(lr=cfg.learning_rate))
    result = TrainResult(params=params)

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(windows))
        batch_losses: list[float] = []
        skipped = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [windows[i] for i in order[start:start + cfg.batch_size]]
            result.params, batch_loss, batch_skipped = train_step(
                result.params, batch, grid, strategy, optimizer
            )
            skipped += batch_skipped
            if not math.isnan(batch_loss):
                batch_losses.append(batch_loss)

        epoch_loss = float(np.mean(batch_losses)) if batch_losses else math.nan
        result.history.append(EpochLog(epoch=epoch, loss=epoch_loss, steps=optimizer.state.t, skipped=skipped))
        if epoch % cfg.log_every == 0 or epoch == cfg.epochs:
            logger.info("epoch %d/%d loss %.6f (skipped %d)", epoch, cfg.epochs, epoch_loss, skipped)

    return result
