"""Latent integral-operator model: encoder/decoder projections around the fixed-point solve."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from scipy.special import expit

from .constants import (
    DEFAULT_D_FF,
    DEFAULT_D_MODEL,
    DEFAULT_INIT_GAMMA,
    DEFAULT_POS_DIM,
    INIT_STD_BASE,
    STIMULUS_PIXELS,
)
from .errors import CheckpointError, DimensionError, UsageError
from .fixed_point import FixedPointResult, SolverConfig, solve
from .integral_operator import KernelParams, stacked_closure
from .output_writer import atomic_write_text
from .quadrature import CoordGrid, QuadratureRule, make_grid
from .synthetic import Recording
from .tensor import Tensor, as_tensor, repeat_rows, softmax
from .tensor_io import load_tensors, save_tensors


DecodeTask = Literal["classify", "pixels"]


class ModelConfig(BaseModel):
    """Architecture hyperparameters, stored in checkpoint sidecars."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    d_model: int = Field(DEFAULT_D_MODEL, ge=1)
    pos_dim: int = Field(DEFAULT_POS_DIM, ge=2)
    d_ff: int = Field(DEFAULT_D_FF, ge=1)
    n_classes: int = Field(2, ge=2)
    n_layers: int = Field(1, ge=1)
    init_gamma: float = Field(DEFAULT_INIT_GAMMA, gt=0.0)
    time_rule: QuadratureRule = "trapezoid"

    @field_validator("pos_dim")
    @classmethod
    def _even_pos_dim(cls, value: int) -> int:
        if value % 2:
            raise ValueError("pos_dim must be even")
        return value


@dataclass
class AffineParams:
    """Affine map x @ weight + bias, weight [d_in x d_out]."""

    weight: Tensor
    bias: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_out: int, std: float) -> AffineParams:
        return cls(weight=Tensor(rng.normal(0.0, std, size=(d_in, d_out))), bias=Tensor(np.zeros(d_out)))


def affine_map(weights: AffineParams, x: Tensor | np.ndarray) -> Tensor:
    """input @ W + b for input [n x d_in]."""
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != weights.weight.shape[0]:
        raise DimensionError(f"affine map expects [n x {weights.weight.shape[0]}], got {x.shape}")
    return x @ weights.weight + weights.bias


_AFFINE_PARTS = ("encoder", "decoder", "class_head", "pixel_head", "stim_embed")


@dataclass
class ModelParams:
    """Every learnable parameter of the model.

    encoder lifts a scalar signal sample to d_model, decoder projects back;
    the heads read the pooled latent; stim_embed lifts a stimulus frame.
    """

    encoder: AffineParams
    decoder: AffineParams
    kernels: list[KernelParams]
    class_head: AffineParams
    pixel_head: AffineParams
    stim_embed: AffineParams

    @property
    def d_model(self) -> int:
        return self.encoder.weight.shape[1]

    @classmethod
    def init(cls, cfg: ModelConfig, rng: np.random.Generator) -> ModelParams:
        std = INIT_STD_BASE * cfg.init_gamma
        return cls(
            encoder=AffineParams.init(rng, 1, cfg.d_model, std),
            decoder=AffineParams.init(rng, cfg.d_model, 1, std),
            kernels=[
                KernelParams.init(rng, cfg.d_model, cfg.pos_dim, cfg.d_ff, cfg.init_gamma)
                for _ in range(cfg.n_layers)
            ],
            class_head=AffineParams.init(rng, cfg.d_model, cfg.n_classes, std),
            pixel_head=AffineParams.init(rng, cfg.d_model, STIMULUS_PIXELS, std),
            stim_embed=AffineParams.init(rng, STIMULUS_PIXELS, cfg.d_model, std),
        )

    def named_tensors(self) -> dict[str, Tensor]:
        """Flat name -> Tensor view, e.g. ``encoder.weight``, ``kernel.0.w_q``."""
        named: dict[str, Tensor] = {}
        for part in _AFFINE_PARTS:
            affine = getattr(self, part)
            named[f"{part}.weight"] = affine.weight
            named[f"{part}.bias"] = affine.bias
        for i, kernel in enumerate(self.kernels):
            named.update(kernel.named_tensors(prefix=f"kernel.{i}"))
        return named

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {name: tensor.numpy() for name, tensor in self.named_tensors().items()}

    @classmethod
    def from_named(cls, named: dict[str, Tensor | np.ndarray], requires_grad: bool = False) -> ModelParams:
        """Rebuild from a flat map; arrays are wrapped as leaf tensors."""
        tensors = {
            name: Tensor(value.data if isinstance(value, Tensor) else value, requires_grad=requires_grad)
            for name, value in named.items()
        }
        n_layers = len({name.split(".")[1] for name in tensors if name.startswith("kernel.")})
        affines = {
            part: AffineParams(weight=tensors[f"{part}.weight"], bias=tensors[f"{part}.bias"])
            for part in _AFFINE_PARTS
        }
        kernels = [KernelParams.from_named(tensors, prefix=f"kernel.{i}") for i in range(n_layers)]
        return cls(kernels=kernels, **affines)

    def trainable(self) -> ModelParams:
        """Copy whose tensors are fresh leaves requiring gradients."""
        return ModelParams.from_named(self.named_tensors(), requires_grad=True)


@dataclass
class DecodePass:
    logits: Tensor
    pooled: Tensor
    solve: FixedPointResult


@dataclass
class EncodePass:
    prediction: Tensor
    solve: FixedPointResult


def grid_for_window(window: Recording, time_rule: QuadratureRule = "trapezoid") -> CoordGrid:
    """Grid over the window's voxel coordinates and frames."""
    return make_grid(
        window.n_voxels,
        window.spatial_dims,
        window.n_frames,
        space_layout="provided",
        provided_coords=window.voxel_coords,
        time_rule=time_rule,
    )


def _signal_points(signal: np.ndarray, grid: CoordGrid) -> Tensor:
    if signal.shape != (grid.n_space, grid.n_time):
        raise DimensionError(f"window shape {signal.shape} does not match grid {(grid.n_space, grid.n_time)}")
    # time-major rows: row t*P + p holds signal[p, t]
    return Tensor(signal.T.reshape(-1, 1))


def pool(u: Tensor, grid: CoordGrid) -> Tensor:
    """Quadrature-weighted mean of the rows of u, as a [1 x d] tensor."""
    return Tensor(grid.point_weights()[None, :]) @ u


def decode_pass(
    params: ModelParams,
    window: Recording | np.ndarray,
    grid: CoordGrid,
    cfg: SolverConfig,
    task: DecodeTask = "classify",
) -> DecodePass:
    """Run the decoding pipeline and keep the intermediate latent and solve diagnostics."""
    signal = window.signal if isinstance(window, Recording) else np.asarray(window, dtype=np.float64)
    u_lat = affine_map(params.encoder, _signal_points(signal, grid))
    result = solve(stacked_closure(params.kernels, grid), u_lat, cfg)
    pooled = pool(result.u_star, grid)
    if task == "classify":
        head = params.class_head
    elif task == "pixels":
        head = params.pixel_head
    else:
        raise UsageError(f"unknown decode task: {task}")
    logits = affine_map(head, pooled)
    return DecodePass(logits=logits.reshape(logits.shape[1]), pooled=pooled, solve=result)


def forward_decode(
    params: ModelParams,
    window: Recording | np.ndarray,
    grid: CoordGrid,
    cfg: SolverConfig,
    task: DecodeTask = "classify",
) -> Tensor:
    """Logits decoded from a window.

    Args:
        params: Model parameters
        window: Recording window [P x TP]
        grid: Grid matching the window
        cfg: Solver configuration
        task: "classify" (n_classes logits) or "pixels" (100 logits)

    Returns:
        1-D logits tensor
    """
    return decode_pass(params, window, grid, cfg, task).logits


def pooled_latent(
    params: ModelParams,
    window: Recording | np.ndarray,
    grid: CoordGrid,
    cfg: SolverConfig,
) -> np.ndarray:
    """The pooled u* vector [d_model] that the decoding heads read."""
    return decode_pass(params, window, grid, cfg).pooled.numpy().reshape(-1)


def encode_pass(
    params: ModelParams,
    stimulus_seq: Tensor | np.ndarray,
    grid: CoordGrid,
    cfg: SolverConfig,
) -> EncodePass:
    stimulus_seq = as_tensor(stimulus_seq)
    if stimulus_seq.shape != (grid.n_time, STIMULUS_PIXELS):
        raise DimensionError(
            f"stimulus sequence {stimulus_seq.shape} does not match {(grid.n_time, STIMULUS_PIXELS)}"
        )
    embedded = affine_map(params.stim_embed, stimulus_seq)
    u_lat = repeat_rows(embedded, grid.n_space)
    result = solve(stacked_closure(params.kernels, grid), u_lat, cfg)
    bold = affine_map(params.decoder, result.u_star).reshape(grid.n_time, grid.n_space).T
    return EncodePass(prediction=bold, solve=result)


def forward_encode(
    params: ModelParams,
    stimulus_seq: Tensor | np.ndarray,
    grid: CoordGrid,
    cfg: SolverConfig,
) -> Tensor:
    """Predict the BOLD window [P x TP] evoked by a stimulus sequence [TP x 100]."""
    return encode_pass(params, stimulus_seq, grid, cfg).prediction


def classify(logits: Tensor | np.ndarray) -> tuple[int, np.ndarray]:
    """Argmax label (lowest index on ties) and softmax probabilities."""
    logits = as_tensor(logits).reshape(-1)
    if logits.shape[0] < 2:
        raise UsageError(f"classification needs at least 2 logits, got {logits.shape[0]}")
    probs = softmax(logits, axis=0).numpy()
    return int(np.argmax(logits.data)), probs


def predict_stimulus(pixel_logits: Tensor | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel probabilities and the binary image (pixel on iff prob > 0.5)."""
    logits = np.asarray(pixel_logits.data if isinstance(pixel_logits, Tensor) else pixel_logits, dtype=np.float64)
    logits = logits.reshape(-1)
    if logits.shape[0] != STIMULUS_PIXELS:
        raise DimensionError(f"expected {STIMULUS_PIXELS} pixel logits, got {logits.shape[0]}")
    probs = expit(logits)
    return probs, (probs > 0.5).astype(np.int64)


def checkpoint_sidecar(path: Path | str) -> Path:
    return Path(path).with_suffix(".json")


def save_checkpoint(
    path: Path | str,
    params: ModelParams,
    model_cfg: ModelConfig,
    solver_cfg: SolverConfig,
    extra: dict | None = None,
) -> Path:
    """Write parameter tensors plus a JSON sidecar with the architecture and solver config."""
    path = save_tensors(path, params.named_tensors())
    sidecar = {"model": model_cfg.model_dump(), "solver": solver_cfg.model_dump(), **(extra or {})}
    atomic_write_text(checkpoint_sidecar(path), json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(path: Path | str) -> tuple[ModelParams, ModelConfig, SolverConfig, dict]:
    """Inverse of save_checkpoint; the last element holds any extra sidecar keys.

    Raises:
        CheckpointError: the sidecar is not a valid config document, or entries are missing
        TensorFileError: the tensor container is corrupted
    """
    sidecar_path = checkpoint_sidecar(path)
    try:
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
        model_cfg = ModelConfig.model_validate(sidecar.pop("model"))
        solver_cfg = SolverConfig.model_validate(sidecar.pop("solver"))
    except (json.JSONDecodeError, KeyError, TypeError, AttributeError, ValidationError) as e:
        raise CheckpointError(f"unusable checkpoint sidecar {sidecar_path}: {e}") from e
    named = load_tensors(path)
    try:
        params = ModelParams.from_named(named)
    except KeyError as e:
        raise CheckpointError(f"checkpoint {path} has no entry {e}") from e
    return params, model_cfg, solver_cfg, sidecar
