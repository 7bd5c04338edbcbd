"""Latent neural integral operators with fixed-point dynamics for BOLD-like signals."""

from .errors import (
    CheckpointError,
    ConfigError,
    DegenerateInputError,
    DimensionError,
    NIOperatorError,
    NumericalOverflowError,
    SolverDivergenceError,
    TensorFileError,
    UsageError,
)
from .experiment import ExperimentConfig, ExperimentReport, run_experiment
from .fixed_point import FixedPointResult, SolverConfig, solve
from .integral_operator import KernelParams, operator_apply
from .model import ModelConfig, ModelParams, classify, forward_decode, forward_encode, predict_stimulus
from .quadrature import CoordGrid, make_grid
from .synthetic import DatasetSpec, Recording, synth_bold, window_slice
from .tensor import Tape, Tensor, grad_check

__all__ = [
    "CheckpointError",
    "ConfigError",
    "CoordGrid",
    "DatasetSpec",
    "DegenerateInputError",
    "DimensionError",
    "ExperimentConfig",
    "ExperimentReport",
    "FixedPointResult",
    "KernelParams",
    "ModelConfig",
    "ModelParams",
    "NIOperatorError",
    "NumericalOverflowError",
    "Recording",
    "SolverConfig",
    "SolverDivergenceError",
    "Tape",
    "Tensor",
    "TensorFileError",
    "UsageError",
    "classify",
    "forward_decode",
    "forward_encode",
    "grad_check",
    "main",
    "make_grid",
    "operator_apply",
    "predict_stimulus",
    "run_experiment",
    "solve",
    "synth_bold",
    "window_slice",
]


def main() -> None:
    from .cli import main as cli_main

    cli_main()
