"""Run configuration files: strict parsing, path resolution and the resolved-config echo."""

from __future__ import annotations

import json
import logging
from pathlib import Path

from pydantic import ConfigDict, Field, ValidationError

from .constants import DEFAULT_KNN_NEIGHBORS, DEFAULT_KNN_SPLITS, DEFAULT_KNN_TEST_FRACTION
from .errors import ConfigError, UsageError
from .experiment import ExperimentConfig
from .output_writer import OutputDirectory


logger = logging.getLogger(__name__)

RESOLVED_CONFIG_NAME = "resolved_config.json"


class RunConfig(ExperimentConfig):
    """ExperimentConfig plus the paths and latent-analysis settings of a CLI run.

    Relative paths are resolved against the directory holding the config file.
    """

    model_config = ConfigDict(extra="forbid")

    output_dir: str = "out"
    checkpoint: str | None = None
    knn_neighbors: int = Field(DEFAULT_KNN_NEIGHBORS, ge=1)
    knn_splits: int = Field(DEFAULT_KNN_SPLITS, ge=1)
    knn_test_fraction: float = Field(DEFAULT_KNN_TEST_FRACTION, gt=0.0, lt=1.0)

    def output(self) -> OutputDirectory:
        return OutputDirectory(self.output_dir)


def json_pointer(loc: tuple[int | str, ...]) -> str:
    """RFC 6901 pointer for a pydantic error location."""
    parts = [str(part).replace("~", "~0").replace("/", "~1") for part in loc]
    return "/" + "/".join(parts)


def _first_error(error: ValidationError) -> ConfigError:
    details = error.errors()[0]
    message = "unknown key" if details["type"] == "extra_forbidden" else details["msg"]
    return ConfigError(json_pointer(details["loc"]), message)


def _resolve(base: Path, value: str) -> str:
    path = Path(value).expanduser()
    return str(path if path.is_absolute() else (base / path).resolve())


def load_config(path: Path | str) -> RunConfig:
    """Validate a JSON config file without writing anything.

    Raises:
        UsageError: the file does not exist
        ConfigError: invalid JSON, unknown key, type mismatch, missing key or missing dataset file
    """
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("", f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(document, dict):
        raise ConfigError("", "config must be a JSON object")

    try:
        # strict: "5" is not an int and true is not a seed
        config = RunConfig.model_validate_json(text, strict=True)
    except ValidationError as e:
        raise _first_error(e) from e

    base = path.resolve().parent
    updates: dict[str, object] = {"output_dir": _resolve(base, config.output_dir)}
    if config.checkpoint is not None:
        updates["checkpoint"] = _resolve(base, config.checkpoint)
    if config.dataset.path is not None:
        dataset_path = _resolve(base, config.dataset.path)
        if not Path(dataset_path).is_file():
            raise ConfigError("/dataset/path", f"file not found: {dataset_path}")
        updates["dataset"] = config.dataset.model_copy(update={"path": dataset_path})
    return config.model_copy(update=updates)


def parse_config(path: Path | str) -> RunConfig:
    """Load and validate a config, then echo it with every default filled in.

    Args:
        path: JSON config file

    Returns:
        The resolved RunConfig; ``resolved_config.json`` is written to its output directory
    """
    config = load_config(path)
    resolved = json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
    written = config.output().write_text(RESOLVED_CONFIG_NAME, resolved)
    logger.debug("resolved config written to %s", written)
    return config
