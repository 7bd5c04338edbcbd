"""Exception hierarchy for nioperator."""

from __future__ import annotations


class NIOperatorError(Exception):
    """Base class for every error raised by nioperator."""


class DimensionError(NIOperatorError, ValueError):
    """Operand shapes do not agree."""


class UsageError(NIOperatorError, ValueError):
    """A precondition of an operation was violated."""


class NumericalOverflowError(NIOperatorError, ArithmeticError):
    """A forward computation produced NaN or Inf from finite inputs."""


class SolverDivergenceError(NIOperatorError, RuntimeError):
    """The fixed-point residual grew beyond the divergence threshold."""

    def __init__(self, iteration: int, residual: float, threshold: float):
        super().__init__(
            f"Fixed-point iteration diverged at iteration {iteration}: "
            f"residual {residual:.6g} exceeds threshold {threshold:.6g}"
        )
        self.iteration = iteration
        self.residual = residual
        self.threshold = threshold


class DegenerateInputError(NIOperatorError, ValueError):
    """Input carries no variance where a statistic needs some."""


class ConfigError(NIOperatorError, ValueError):
    """A run configuration failed validation."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer


class TensorFileError(NIOperatorError, ValueError):
    """Base class for tensor container read/write failures."""


class MagicMismatchError(TensorFileError):
    """File does not start with the tensor container magic bytes."""


class VersionMismatchError(TensorFileError):
    """File was written with an unsupported container version."""


class TruncatedFileError(TensorFileError):
    """File ends before the declared entries are complete."""


class ChecksumMismatchError(TensorFileError):
    """Trailing CRC32 does not match the file contents."""


class NonFiniteTensorError(TensorFileError):
    """Refusing to save a tensor holding NaN or Inf."""


class CheckpointError(NIOperatorError, ValueError):
    """A checkpoint sidecar or its tensor entries do not describe a model."""
