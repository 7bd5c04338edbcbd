"""Damped Picard iteration for the latent fixed-point equation u = T(u) + u_lat."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .constants import DEFAULT_DAMPING, DEFAULT_DIVERGENCE_FACTOR, DEFAULT_MAX_ITERS, DEFAULT_TOL
from .errors import DimensionError, NumericalOverflowError, SolverDivergenceError
from .tensor import Tensor


logger = logging.getLogger(__name__)


class SolverConfig(BaseModel):
    """Iteration budget, damping and stopping thresholds of the fixed-point solve."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    max_iters: int = Field(DEFAULT_MAX_ITERS, ge=1)
    damping: float = Field(DEFAULT_DAMPING, gt=0.0, le=1.0)
    tol: float = Field(DEFAULT_TOL, gt=0.0)
    divergence_factor: float = Field(DEFAULT_DIVERGENCE_FACTOR, gt=0.0)


@dataclass
class FixedPointResult:
    u_star: Tensor
    residual_history: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iters_used(self) -> int:
        return len(self.residual_history)

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else math.nan


def _rms(values: np.ndarray) -> float:
    return float(np.linalg.norm(values) / math.sqrt(values.size))


def residual(op: Callable[[Tensor], Tensor], u: Tensor, u_lat: Tensor) -> float:
    """||T(u) + u_lat - u||_2 / sqrt(numel)."""
    if u.shape != u_lat.shape:
        raise DimensionError(f"residual: u {u.shape} and u_lat {u_lat.shape} differ")
    tu = op(u)
    if tu.shape != u.shape:
        raise DimensionError(f"operator changed shape {u.shape} -> {tu.shape}")
    return _rms(tu.data + u_lat.data - u.data)


def solve(op: Callable[[Tensor], Tensor], u_lat: Tensor, cfg: SolverConfig | None = None) -> FixedPointResult:
    """Solve u = T(u) + u_lat starting from u_0 = u_lat.

    Every iterate is built from tape-recorded operations, so gradients flow
    through the unrolled iterations.

    Args:
        op: Operator closure T, shape-preserving
        u_lat: Latent forcing term
        cfg: Solver configuration

    Returns:
        FixedPointResult with the final iterate and the residual of each iteration

    Raises:
        SolverDivergenceError: residual exceeds divergence_factor * (initial residual + 1)
    """
    cfg = cfg or SolverConfig()
    alpha = cfg.damping
    u = u_lat
    history: list[float] = []
    threshold = math.inf

    for iteration in range(cfg.max_iters):
        try:
            tu = op(u)
        except NumericalOverflowError as e:
            raise SolverDivergenceError(iteration, math.inf, threshold) from e
        if tu.shape != u.shape:
            raise DimensionError(f"operator changed shape {u.shape} -> {tu.shape}")

        target = tu + u_lat
        r = _rms(target.data - u.data)
        history.append(r)
        if iteration == 0:
            threshold = cfg.divergence_factor * (r + 1.0)
        if not math.isfinite(r) or r > threshold:
            raise SolverDivergenceError(iteration, r, threshold)

        u = target if alpha == 1.0 else u * (1.0 - alpha) + target * alpha
        if r <= cfg.tol:
            return FixedPointResult(u_star=u, residual_history=history, converged=True)

    logger.debug("fixed point not converged after %d iterations (residual %.3g)", cfg.max_iters, history[-1])
    return FixedPointResult(u_star=u, residual_history=history, converged=False)
