"""Shared pytest fixtures for nioperator tests.

Fixtures:
- rng: Seeded numpy generator
- small_grid: 4-voxel, 3-frame grid on a 2-D lattice
- small_recording: Tiny stimulus-carrying recording with known voxel coordinates
- toy_params: Small ModelParams with a mild contraction for fast forward passes
- write_config: Factory writing a JSON run config into a temporary directory
"""

from __future__ import annotations

import json
from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from nioperator.model import ModelConfig, ModelParams
from nioperator.quadrature import CoordGrid, make_grid
from nioperator.synthetic import Recording, RecordingMeta


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def small_grid() -> CoordGrid:
    """4 spatial points on a 2x2 lattice, 3 frames, trapezoid in time."""
    return make_grid(4, 2, 3)


@pytest.fixture
def small_recording(rng: np.random.Generator) -> Recording:
    """4 voxels x 6 frames with alternating labels and random binary stimuli."""
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    return Recording(
        signal=rng.normal(size=(4, 6)),
        voxel_coords=coords,
        labels=np.array([0, 1, 0, 1, 0, 1]),
        stimuli=rng.integers(0, 2, size=(6, 100)).astype(np.float64),
        meta=RecordingMeta(generator="fixture", seed=1234),
    )


@pytest.fixture
def toy_model_config() -> ModelConfig:
    return ModelConfig(d_model=4, pos_dim=4, d_ff=6, n_classes=2)


@pytest.fixture
def toy_params(toy_model_config: ModelConfig) -> ModelParams:
    return ModelParams.init(toy_model_config, np.random.default_rng(7))


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[[dict], Path]:
    """Write a config document to ``tmp_path/config.json`` and return its path.

    ``output_dir`` defaults to ``tmp_path/out`` unless the document sets it.
    """

    def write(document: dict, name: str = "config.json") -> Path:
        document = {"output_dir": str(tmp_path / "out"), **document}
        path = tmp_path / name
        path.write_text(json.dumps(document))
        return path

    return write
