"""Atomic file output confined to a run's output directory."""

from __future__ import annotations

import os
import tempfile
import warnings
from pathlib import Path

from .errors import UsageError


def atomic_write_bytes(path: Path, data: bytes) -> Path:
    """Write ``data`` to ``path`` via a temp file in the same directory, then rename.

    Args:
        path: Destination file
        data: Bytes to write

    Returns:
        The destination path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())

        # Verify file was written correctly
        file_size = Path(temp_name).stat().st_size
        if file_size != len(data):
            raise IOError(f"Temp file size mismatch: {file_size} != {len(data)}")

        os.replace(temp_name, path)
    except BaseException:
        cleanup_files([temp_name])
        raise
    return path


def atomic_write_text(path: Path, text: str) -> Path:
    """UTF-8, LF line endings."""
    return atomic_write_bytes(path, text.encode("utf-8"))


def cleanup_files(file_paths: list[str | Path]) -> None:
    """Remove files, warning instead of raising on failure."""
    for temp_file in file_paths:
        try:
            Path(temp_file).unlink()
        except FileNotFoundError:
            pass
        except OSError as e:
            warnings.warn(f"Failed to cleanup temp file {temp_file}: {e}")


class OutputDirectory:
    """Resolves output file names, refusing anything outside the directory."""

    def __init__(self, root: Path | str):
        self.root = Path(root).resolve()
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str | Path) -> Path:
        candidate = (self.root / name).resolve()
        if candidate != self.root and self.root not in candidate.parents:
            raise UsageError(f"refusing to write outside the output directory: {name}")
        return candidate

    def write_text(self, name: str | Path, text: str) -> Path:
        return atomic_write_text(self.path(name), text)

    def write_bytes(self, name: str | Path, data: bytes) -> Path:
        return atomic_write_bytes(self.path(name), data)
