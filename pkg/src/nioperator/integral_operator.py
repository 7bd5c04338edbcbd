"""Learned nonlocal integral operator: quadrature-weighted attention over space-time points."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, fields

import numpy as np

from .constants import DEFAULT_INIT_GAMMA, INIT_STD_BASE
from .errors import DimensionError, UsageError
from .quadrature import CoordGrid
from .tensor import Tensor, softmax, tanh


OperatorFn = Callable[[Tensor], Tensor]


def positional_encode(coords: np.ndarray, pos_dim: int) -> np.ndarray:
    """Sinusoidal features of point coordinates.

    Pair j holds (sin(w c), cos(w c)) of coordinate dimension ``j % d`` at
    frequency w = 2*pi*2^(j // d), so every dimension gets the lowest frequency first.

    Args:
        coords: Coordinates [n x d] in [0,1]
        pos_dim: Even feature width

    Returns:
        Features [n x pos_dim]
    """
    if pos_dim < 2 or pos_dim % 2:
        raise UsageError(f"pos_dim must be a positive even integer, got {pos_dim}")
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2:
        raise DimensionError(f"coords must be 2-D, got shape {coords.shape}")
    d = coords.shape[1]
    features = np.empty((coords.shape[0], pos_dim))
    for j in range(pos_dim // 2):
        omega = 2.0 * np.pi * 2.0 ** (j // d)
        phase = omega * coords[:, j % d]
        features[:, 2 * j] = np.sin(phase)
        features[:, 2 * j + 1] = np.cos(phase)
    return features


def grid_features(grid: CoordGrid, pos_dim: int) -> np.ndarray:
    """Positional features of every grid point [P*T x pos_dim].

    Grid coordinates span the closed [0,1]; they are halved first so that both
    ends stay apart at the lowest frequency.
    """
    return positional_encode(0.5 * grid.point_coords(), pos_dim)


@dataclass
class KernelParams:
    """Parameters of one attention operator layer.

    ``w_pos`` projects positional features to d_model; the mixing MLP is
    ``tanh(y @ mlp_w1 + mlp_b1) @ mlp_w2 + mlp_b2`` added to the attention output y.
    """

    w_pos: Tensor
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_out: Tensor
    mlp_w1: Tensor
    mlp_b1: Tensor
    mlp_w2: Tensor
    mlp_b2: Tensor

    @property
    def d_model(self) -> int:
        return self.w_q.shape[0]

    @property
    def pos_dim(self) -> int:
        return self.w_pos.shape[0]

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        d_model: int,
        pos_dim: int,
        d_ff: int,
        gamma: float = DEFAULT_INIT_GAMMA,
    ) -> KernelParams:
        """Gaussian init with std 0.02*gamma for matrices, zero biases."""
        if pos_dim % 2:
            raise UsageError(f"pos_dim must be even, got {pos_dim}")
        std = INIT_STD_BASE * gamma

        def normal(*shape: int) -> Tensor:
            return Tensor(rng.normal(0.0, std, size=shape))

        return cls(
            w_pos=normal(pos_dim, d_model),
            w_q=normal(d_model, d_model),
            w_k=normal(d_model, d_model),
            w_v=normal(d_model, d_model),
            w_out=normal(d_model, d_model),
            mlp_w1=normal(d_model, d_ff),
            mlp_b1=Tensor(np.zeros(d_ff)),
            mlp_w2=normal(d_ff, d_model),
            mlp_b2=Tensor(np.zeros(d_model)),
        )

    def named_tensors(self, prefix: str = "kernel") -> dict[str, Tensor]:
        return {f"{prefix}.{f.name}": getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_named(cls, named: dict[str, Tensor], prefix: str = "kernel") -> KernelParams:
        return cls(**{f.name: named[f"{prefix}.{f.name}"] for f in fields(cls)})


def operator_closure(params: KernelParams, grid: CoordGrid) -> OperatorFn:
    """Bind an operator layer to a grid, precomputing the grid-dependent constants.

    The returned function maps u [P*T x d_model] to T(u) [P*T x d_model].
    """
    n_points = grid.n_points
    d_model = params.d_model
    pos = Tensor(grid_features(grid, params.pos_dim)) @ params.w_pos
    # softmax(s + log w) == (softmax(s) * w) renormalized per row
    log_weights = Tensor(np.log(grid.point_weights())[None, :])
    scale = 1.0 / np.sqrt(d_model)

    def apply(u: Tensor) -> Tensor:
        if u.ndim != 2 or u.shape != (n_points, d_model):
            raise DimensionError(
                f"operator input has shape {u.shape}, grid expects {(n_points, d_model)}"
            )
        h = u + pos
        q = h @ params.w_q
        k = h @ params.w_k
        v = h @ params.w_v
        attn = softmax((q @ k.T) * scale + log_weights, axis=1)
        y = (attn @ v) @ params.w_out
        return y + tanh(y @ params.mlp_w1 + params.mlp_b1) @ params.mlp_w2 + params.mlp_b2

    return apply


def stacked_closure(layers: list[KernelParams], grid: CoordGrid) -> OperatorFn:
    """Compose operator layers applied in order."""
    bound = [operator_closure(layer, grid) for layer in layers]

    def apply(u: Tensor) -> Tensor:
        for layer in bound:
            u = layer(u)
        return u

    return apply


def operator_apply(params: KernelParams, u: Tensor, grid: CoordGrid) -> Tensor:
    """Evaluate T(u) on ``grid``.

    Args:
        params: Kernel parameters
        u: Latent signal [P*T x d_model], rows time-major
        grid: Coordinate grid with quadrature weights

    Returns:
        T(u) sampled on the same grid
    """
    if u.ndim != 2 or u.shape[0] != grid.n_points:
        raise DimensionError(f"operator input has shape {u.shape}, grid has {grid.n_points} points")
    return operator_closure(params, grid)(u)
