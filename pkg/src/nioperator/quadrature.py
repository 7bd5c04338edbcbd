"""Normalized space-time coordinate grids and quadrature weights."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DimensionError, UsageError


QuadratureRule = Literal["riemann", "trapezoid"]
SpaceLayout = Literal["uniform", "provided"]


@dataclass(frozen=True)
class CoordGrid:
    """Sample coordinates in [0,1]^d_s x [0,1] together with their quadrature weights.

    Points are enumerated time-major: all spatial points of frame 0, then frame 1, ...
    """

    space_coords: np.ndarray
    time_coords: np.ndarray
    space_weights: np.ndarray
    time_weights: np.ndarray

    def __post_init__(self) -> None:
        if self.space_coords.ndim != 2 or self.space_coords.shape[0] != self.space_weights.shape[0]:
            raise DimensionError(
                f"space coords {self.space_coords.shape} do not match space weights {self.space_weights.shape}"
            )
        if self.time_coords.shape != self.time_weights.shape:
            raise DimensionError(
                f"time coords {self.time_coords.shape} do not match time weights {self.time_weights.shape}"
            )
        for name, coords in (("space", self.space_coords), ("time", self.time_coords)):
            if coords.size and (coords.min() < 0.0 or coords.max() > 1.0):
                raise UsageError(f"{name} coordinates must lie in [0, 1]")
        if np.any(np.diff(self.time_coords) <= 0.0):
            raise UsageError("time coordinates must be strictly increasing")

    @property
    def n_space(self) -> int:
        return self.space_coords.shape[0]

    @property
    def n_time(self) -> int:
        return self.time_coords.shape[0]

    @property
    def n_points(self) -> int:
        return self.n_space * self.n_time

    @property
    def spatial_dims(self) -> int:
        return self.space_coords.shape[1]

    def point_weights(self) -> np.ndarray:
        """Product weights dz*ds for every point, time-major, summing to 1."""
        return np.outer(self.time_weights, self.space_weights).reshape(-1)

    def point_coords(self) -> np.ndarray:
        """Coordinates [P*T x (d_s + 1)]: spatial coordinates followed by the time coordinate."""
        space = np.tile(self.space_coords, (self.n_time, 1))
        time = np.repeat(self.time_coords, self.n_space)[:, None]
        return np.hstack([space, time])

    def subset(self, indices: np.ndarray | list[int], renormalize: bool = True) -> CoordGrid:
        """Grid restricted (or reordered) to the given spatial points.

        Args:
            indices: Spatial point indices, in the desired order
            renormalize: Rescale spatial weights back to unit total measure

        Returns:
            New CoordGrid sharing the time axis
        """
        indices = np.asarray(indices, dtype=np.int64)
        weights = self.space_weights[indices]
        if renormalize:
            weights = weights / weights.sum()
        return CoordGrid(
            space_coords=self.space_coords[indices],
            time_coords=self.time_coords,
            space_weights=weights,
            time_weights=self.time_weights,
        )


def lattice_coords(n: int, d: int) -> np.ndarray:
    """First ``n`` points of the smallest uniform lattice in [0,1]^d holding them, row-major."""
    if n < 1 or d < 1:
        raise UsageError(f"lattice needs n >= 1 and d >= 1, got n={n}, d={d}")
    side = 1
    while side ** d < n:
        side += 1
    indices = np.array(list(np.ndindex(*(side,) * d))[:n], dtype=np.float64)
    if side == 1:
        return np.full((n, d), 0.5)
    return indices / (side - 1)


def rescale_coords(coords: np.ndarray) -> np.ndarray:
    """Min-max rescale each dimension to [0,1]; constant dimensions map to 0.5."""
    coords = np.asarray(coords, dtype=np.float64)
    lo = coords.min(axis=0)
    span = coords.max(axis=0) - lo
    degenerate = span == 0.0
    scaled = (coords - lo) / np.where(degenerate, 1.0, span)
    scaled[:, degenerate] = 0.5
    return scaled


def time_coords(n_time: int) -> np.ndarray:
    if n_time < 1:
        raise UsageError(f"n_time must be >= 1, got {n_time}")
    if n_time == 1:
        return np.array([0.5])
    return np.linspace(0.0, 1.0, n_time)


def quadrature_weights(n: int, rule: QuadratureRule = "trapezoid") -> np.ndarray:
    """Weights of a quadrature rule on n equispaced nodes of [0,1].

    Args:
        n: Number of nodes
        rule: "riemann" (uniform 1/n) or "trapezoid" (h/2 at both ends)

    Returns:
        Array of n weights summing to 1
    """
    if n < 1:
        raise UsageError(f"quadrature needs n >= 1, got {n}")
    if rule not in ("riemann", "trapezoid"):
        raise UsageError(f"unknown quadrature rule: {rule}")
    if n == 1:
        return np.ones(1)
    if rule == "riemann":
        return np.full(n, 1.0 / n)
    weights = np.full(n, 1.0 / (n - 1))
    weights[0] *= 0.5
    weights[-1] *= 0.5
    return weights


def integrate(samples: np.ndarray, weights: np.ndarray) -> float:
    samples = np.asarray(samples, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if samples.shape != weights.shape:
        raise DimensionError(f"integrate: samples {samples.shape} and weights {weights.shape} differ")
    return float(np.dot(samples, weights))


def make_grid(
    n_space: int,
    d_s: int,
    n_time: int,
    space_layout: SpaceLayout = "uniform",
    provided_coords: np.ndarray | None = None,
    time_rule: QuadratureRule = "trapezoid",
) -> CoordGrid:
    """Build a CoordGrid over P spatial points and T frames.

    Spatial weights are always uniform: voxels are treated as equal-volume samples.

    Args:
        n_space: Number of spatial points P
        d_s: Spatial dimensionality
        n_time: Number of frames T
        space_layout: "uniform" lattice or "provided" voxel coordinates
        provided_coords: Voxel coordinates [P x d_s] for the provided layout
        time_rule: Quadrature rule along time

    Returns:
        CoordGrid with normalized coordinates and unit-measure weights
    """
    if n_space < 1 or d_s < 1 or n_time < 1:
        raise UsageError(f"grid needs positive sizes, got n_space={n_space}, d_s={d_s}, n_time={n_time}")

    if space_layout == "uniform":
        space = lattice_coords(n_space, d_s)
    elif space_layout == "provided":
        if provided_coords is None:
            raise UsageError("provided space layout requires provided_coords")
        provided = np.asarray(provided_coords, dtype=np.float64)
        if provided.shape != (n_space, d_s):
            raise DimensionError(f"provided coords have shape {provided.shape}, expected {(n_space, d_s)}")
        space = rescale_coords(provided)
    else:
        raise UsageError(f"unknown space layout: {space_layout}")

    return CoordGrid(
        space_coords=space,
        time_coords=time_coords(n_time),
        space_weights=quadrature_weights(n_space, "riemann"),
        time_weights=quadrature_weights(n_time, time_rule),
    )

