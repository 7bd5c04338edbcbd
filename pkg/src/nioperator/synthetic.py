"""Synthetic BOLD-like recordings: stimuli, HRF convolution, windowing and dataset files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.signal import lfilter
from scipy.stats import gamma

from .constants import (
    DATASET_COORDS,
    DATASET_LABELS,
    DATASET_SIGNAL,
    DATASET_STIMULI,
    DEFAULT_N_VOXELS,
    DEFAULT_SPATIAL_DIMS,
    DEFAULT_TR_SECONDS,
    HRF_DURATION_SECONDS,
    STIMULUS_PIXELS,
    STIMULUS_SIDE,
)
from .errors import DimensionError, UsageError
from .output_writer import atomic_write_text
from .quadrature import lattice_coords
from .tensor_io import load_tensors, save_tensors


StimulusKind = Literal["random", "geometric"]
WMapKind = Literal["sparse", "distributed"]
DatasetKind = Literal["classification", "stimulus"]

# category ids used by stimulus datasets
CATEGORY_RANDOM = 0
CATEGORY_GEOMETRIC = 1


class RecordingMeta(BaseModel):
    """Provenance of a recording, stored in the dataset JSON sidecar."""

    model_config = ConfigDict(extra="forbid")

    generator: str = "custom"
    seed: int = 0
    noise_std: float = 0.0
    mem_coef: float = 0.0
    tr_seconds: float = DEFAULT_TR_SECONDS
    offset: int = 0


@dataclass(frozen=True)
class Recording:
    """Spatiotemporal signal [P x T] with per-frame targets.

    ``labels`` holds one class/category id per frame; ``stimuli`` optionally holds
    the flattened 10x10 stimulus shown at each frame. A window inherits the
    targets of its last frame (``label`` / ``stimulus``).
    """

    signal: np.ndarray
    voxel_coords: np.ndarray
    labels: np.ndarray
    stimuli: np.ndarray | None = None
    meta: RecordingMeta = field(default_factory=RecordingMeta)

    def __post_init__(self) -> None:
        if self.signal.ndim != 2 or self.signal.shape[1] < 1:
            raise DimensionError(f"signal must be [P x T] with T >= 1, got {self.signal.shape}")
        if not np.all(np.isfinite(self.signal)):
            raise UsageError("recording signal must be finite")
        if self.voxel_coords.ndim != 2 or self.voxel_coords.shape[0] != self.signal.shape[0]:
            raise DimensionError(
                f"voxel coords {self.voxel_coords.shape} do not match {self.signal.shape[0]} voxels"
            )
        if self.labels.shape != (self.signal.shape[1],):
            raise DimensionError(f"labels {self.labels.shape} do not match {self.signal.shape[1]} frames")
        if self.stimuli is not None and self.stimuli.shape != (self.signal.shape[1], STIMULUS_PIXELS):
            raise DimensionError(f"stimuli {self.stimuli.shape} do not match {self.signal.shape[1]} frames")

    @property
    def n_voxels(self) -> int:
        return self.signal.shape[0]

    @property
    def n_frames(self) -> int:
        return self.signal.shape[1]

    @property
    def tp(self) -> int:
        return self.n_frames

    @property
    def spatial_dims(self) -> int:
        return self.voxel_coords.shape[1]

    @property
    def label(self) -> int:
        return int(self.labels[-1])

    @property
    def stimulus(self) -> np.ndarray:
        if self.stimuli is None:
            raise UsageError("recording carries no stimuli")
        return self.stimuli[-1]


@dataclass(frozen=True)
class Stimulus:
    pixels: np.ndarray
    kind: StimulusKind

    def __post_init__(self) -> None:
        if self.pixels.shape != (STIMULUS_SIDE, STIMULUS_SIDE):
            raise DimensionError(f"stimulus must be {STIMULUS_SIDE}x{STIMULUS_SIDE}, got {self.pixels.shape}")
        if not np.isin(self.pixels, (0, 1)).all():
            raise UsageError("stimulus pixels must be 0 or 1")

    def flat(self) -> np.ndarray:
        return self.pixels.reshape(-1).astype(np.float64)


class DatasetSpec(BaseModel):
    """Parameters of the synthetic generator, or a path to a saved dataset."""

    model_config = ConfigDict(extra="forbid")

    n_voxels: int = Field(DEFAULT_N_VOXELS, ge=1)
    spatial_dims: int = Field(DEFAULT_SPATIAL_DIMS, ge=1)
    n_blocks: int = Field(24, ge=1)
    block_len: int = Field(20, ge=1)
    tr_seconds: float = Field(DEFAULT_TR_SECONDS, gt=0.0)
    noise_std: float = Field(0.5, ge=0.0)
    mem_coef: float = Field(0.8, ge=0.0, lt=1.0)
    w_map_kind: WMapKind = "sparse"
    fan_in: int = Field(4, ge=1, le=STIMULUS_PIXELS)
    path: str | None = None


def hrf(t_seconds: float | np.ndarray) -> float | np.ndarray:
    """Canonical double-gamma haemodynamic response, g(t; 6, 1) - g(t; 16, 1) / 6."""
    t = np.asarray(t_seconds, dtype=np.float64)
    if np.any(t < 0):
        raise UsageError(f"hrf needs t >= 0, got {t_seconds}")
    value = gamma.pdf(t, 6.0, scale=1.0) - gamma.pdf(t, 16.0, scale=1.0) / 6.0
    return float(value) if value.ndim == 0 else value


def hrf_kernel(tr_seconds: float = DEFAULT_TR_SECONDS, duration: float = HRF_DURATION_SECONDS) -> np.ndarray:
    """HRF sampled every TR on [0, duration)."""
    if tr_seconds <= 0:
        raise UsageError(f"tr_seconds must be positive, got {tr_seconds}")
    n = max(1, int(np.floor(duration / tr_seconds + 1e-9)))
    return hrf(np.arange(n) * tr_seconds)


def _geometric_pixels(rng: np.random.Generator) -> np.ndarray:
    pixels = np.zeros((STIMULUS_SIDE, STIMULUS_SIDE), dtype=np.int64)
    shape = rng.choice(["rectangle", "cross", "frame"])
    if shape == "rectangle":
        h, w = rng.integers(2, 7, size=2)
        r, c = rng.integers(0, STIMULUS_SIDE - h + 1), rng.integers(0, STIMULUS_SIDE - w + 1)
        pixels[r:r + h, c:c + w] = 1
    elif shape == "cross":
        arm = int(rng.integers(1, 4))
        r, c = rng.integers(arm, STIMULUS_SIDE - arm, size=2)
        pixels[r, c - arm:c + arm + 1] = 1
        pixels[r - arm:r + arm + 1, c] = 1
    else:
        h, w = rng.integers(3, 9, size=2)
        r, c = rng.integers(0, STIMULUS_SIDE - h + 1), rng.integers(0, STIMULUS_SIDE - w + 1)
        pixels[r:r + h, c:c + w] = 1
        pixels[r + 1:r + h - 1, c + 1:c + w - 1] = 0
    return pixels


def gen_stimulus(kind: StimulusKind, seed: int) -> Stimulus:
    """Seeded 10x10 binary stimulus.

    Args:
        kind: "random" for i.i.d. Bernoulli(0.5) pixels, "geometric" for one filled
            rectangle, plus-cross or frame
        seed: Generator seed

    Returns:
        Stimulus
    """
    rng = np.random.default_rng(seed)
    if kind == "random":
        pixels = rng.integers(0, 2, size=(STIMULUS_SIDE, STIMULUS_SIDE))
    elif kind == "geometric":
        pixels = _geometric_pixels(rng)
    else:
        raise UsageError(f"unknown stimulus kind: {kind}")
    return Stimulus(pixels=pixels.astype(np.int64), kind=kind)


def roi_indices(voxel_coords: np.ndarray, fraction: float) -> np.ndarray:
    """Indices of the contiguous low-x region holding ``fraction`` of the voxels, ascending."""
    if not 0.0 < fraction <= 1.0:
        raise UsageError(f"ROI fraction must be in (0, 1], got {fraction}")
    n = voxel_coords.shape[0]
    keep = max(1, int(np.ceil(fraction * n - 1e-9)))
    order = np.argsort(voxel_coords[:, 0], kind="stable")
    return np.sort(order[:keep])


def make_w_map(
    voxel_coords: np.ndarray,
    kind: WMapKind = "sparse",
    seed: int = 0,
    fan_in: int = 4,
) -> np.ndarray:
    """Pixel-to-voxel weights [P x 100].

    "sparse" drives only the half-brain region (the visual-cortex analogue), each
    voxel from ``fan_in`` random pixels; "distributed" spreads every pixel's
    influence over voxels anywhere in the volume. Rows are normalized by fan_in.
    """
    rng = np.random.default_rng(seed)
    n_voxels = voxel_coords.shape[0]
    if kind == "sparse":
        driven = roi_indices(voxel_coords, 0.5)
    elif kind == "distributed":
        driven = np.arange(n_voxels)
    else:
        raise UsageError(f"unknown W map kind: {kind}")

    w_map = np.zeros((n_voxels, STIMULUS_PIXELS))
    for voxel in driven:
        pixels = rng.choice(STIMULUS_PIXELS, size=fan_in, replace=False)
        w_map[voxel, pixels] = rng.uniform(0.5, 1.5, size=fan_in) / fan_in
    return w_map


def synth_bold(
    stim_frames: np.ndarray,
    w_map: np.ndarray,
    tr_seconds: float = DEFAULT_TR_SECONDS,
    noise_std: float = 0.0,
    mem_coef: float = 0.0,
    seed: int = 0,
    voxel_coords: np.ndarray | None = None,
    labels: np.ndarray | None = None,
    generator: str = "custom",
) -> Recording:
    """Simulate a BOLD recording from a stimulus sequence.

    Neural drive n_p(k) = W_map[p] . stim(k) + mem_coef * n_p(k-1) is convolved
    with the HRF sampled at TR; Gaussian noise is added.

    Args:
        stim_frames: Stimulus frames [T x 100]
        w_map: Pixel-to-voxel weights [P x 100]
        tr_seconds: Repetition time
        noise_std: Standard deviation of the additive noise
        mem_coef: Autoregressive memory of the neural drive, in [0, 1)
        seed: Noise seed
        voxel_coords: Voxel coordinates [P x d_s]; a uniform lattice when omitted
        labels: Per-frame labels; zeros when omitted
        generator: Name recorded in the metadata

    Returns:
        Recording with signal [P x T]
    """
    stim_frames = np.asarray(stim_frames, dtype=np.float64)
    w_map = np.asarray(w_map, dtype=np.float64)
    if stim_frames.ndim != 2 or stim_frames.shape[0] < 1 or stim_frames.shape[1] != STIMULUS_PIXELS:
        raise DimensionError(f"stim_frames must be [T x {STIMULUS_PIXELS}], got {stim_frames.shape}")
    if w_map.ndim != 2 or w_map.shape[1] != STIMULUS_PIXELS:
        raise DimensionError(f"w_map must be [P x {STIMULUS_PIXELS}], got {w_map.shape}")
    if tr_seconds <= 0 or noise_std < 0 or not 0.0 <= mem_coef < 1.0:
        raise UsageError(
            f"invalid generator parameters: tr={tr_seconds}, noise_std={noise_std}, mem_coef={mem_coef}"
        )

    n_frames, n_voxels = stim_frames.shape[0], w_map.shape[0]
    drive = stim_frames @ w_map.T
    neural = lfilter([1.0], [1.0, -mem_coef], drive, axis=0)
    bold = lfilter(hrf_kernel(tr_seconds), [1.0], neural, axis=0)

    rng = np.random.default_rng(seed)
    signal = bold.T + rng.normal(0.0, noise_std, size=(n_voxels, n_frames)) if noise_std > 0 else bold.T

    if voxel_coords is None:
        voxel_coords = lattice_coords(n_voxels, DEFAULT_SPATIAL_DIMS)
    return Recording(
        signal=np.ascontiguousarray(signal),
        voxel_coords=np.asarray(voxel_coords, dtype=np.float64),
        labels=np.zeros(n_frames, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64),
        stimuli=stim_frames,
        meta=RecordingMeta(
            generator=generator, seed=seed, noise_std=noise_std, mem_coef=mem_coef, tr_seconds=tr_seconds
        ),
    )


def _block_design(
    spec: DatasetSpec, block_stimuli: list[np.ndarray], block_labels: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    frames = np.repeat(np.stack(block_stimuli), spec.block_len, axis=0)
    labels = np.repeat(block_labels, spec.block_len)
    return frames, labels


def build_classification_dataset(spec: DatasetSpec, seed: int, n_classes: int = 2) -> Recording:
    """Block design where each block shows the prototype stimulus of a random class.

    Even classes use random prototypes, odd classes geometric ones.
    """
    rng = np.random.default_rng([seed, 0])
    prototypes = [
        gen_stimulus("random" if c % 2 == 0 else "geometric", seed=int(rng.integers(2**31))).flat()
        for c in range(n_classes)
    ]
    block_labels = rng.integers(0, n_classes, size=spec.n_blocks)
    frames, labels = _block_design(spec, [prototypes[c] for c in block_labels], block_labels)
    return _simulate(spec, seed, rng, frames, labels, "classification")


def build_stimulus_dataset(spec: DatasetSpec, seed: int) -> Recording:
    """Block design of random and geometric stimuli; labels are stimulus categories."""
    rng = np.random.default_rng([seed, 1])
    categories = rng.integers(0, 2, size=spec.n_blocks)
    stimuli = [
        gen_stimulus("geometric" if category == CATEGORY_GEOMETRIC else "random", seed=int(rng.integers(2**31))).flat()
        for category in categories
    ]
    frames, labels = _block_design(spec, stimuli, categories)
    return _simulate(spec, seed, rng, frames, labels, "stimulus")


def _simulate(
    spec: DatasetSpec,
    seed: int,
    rng: np.random.Generator,
    frames: np.ndarray,
    labels: np.ndarray,
    generator: str,
) -> Recording:
    coords = rng.uniform(0.0, 1.0, size=(spec.n_voxels, spec.spatial_dims))
    w_map = make_w_map(coords, spec.w_map_kind, seed=int(rng.integers(2**31)), fan_in=spec.fan_in)
    return synth_bold(
        frames,
        w_map,
        tr_seconds=spec.tr_seconds,
        noise_std=spec.noise_std,
        mem_coef=spec.mem_coef,
        seed=int(rng.integers(2**31)),
        voxel_coords=coords,
        labels=labels,
        generator=generator,
    )


def build_dataset(spec: DatasetSpec, kind: DatasetKind, seed: int, n_classes: int = 2) -> Recording:
    """Load ``spec.path`` when set, otherwise generate a dataset of the given kind."""
    if spec.path is not None:
        return load_recording(spec.path)
    if kind == "classification":
        return build_classification_dataset(spec, seed, n_classes)
    if kind == "stimulus":
        return build_stimulus_dataset(spec, seed)
    raise UsageError(f"unknown dataset kind: {kind}")


def window_slice(rec: Recording, tp: int, stride: int = 1) -> list[Recording]:
    """Cut a recording into windows of ``tp`` frames at offsets 0, stride, 2*stride, ...

    Args:
        rec: Source recording
        tp: Window length in frames
        stride: Offset between consecutive windows

    Returns:
        floor((T - tp) / stride) + 1 windows, each inheriting the label of its last frame
    """
    if not 1 <= tp <= rec.n_frames:
        raise UsageError(f"window length tp={tp} must lie in [1, {rec.n_frames}]")
    if stride < 1:
        raise UsageError(f"stride must be >= 1, got {stride}")
    windows = []
    for offset in range(0, rec.n_frames - tp + 1, stride):
        frames = slice(offset, offset + tp)
        windows.append(replace(
            rec,
            signal=rec.signal[:, frames],
            labels=rec.labels[frames],
            stimuli=None if rec.stimuli is None else rec.stimuli[frames],
            meta=rec.meta.model_copy(update={"offset": rec.meta.offset + offset}),
        ))
    return windows


def restrict_voxels(rec: Recording, indices: np.ndarray) -> Recording:
    indices = np.asarray(indices, dtype=np.int64)
    return replace(rec, signal=rec.signal[indices], voxel_coords=rec.voxel_coords[indices])


def sidecar_path(path: Path | str) -> Path:
    return Path(path).with_suffix(".json")


def save_recording(path: Path | str, rec: Recording) -> Path:
    """Write the container (reserved names signal/coords/labels/stimuli) and its JSON sidecar."""
    tensors = {
        DATASET_SIGNAL: rec.signal,
        DATASET_COORDS: rec.voxel_coords,
        DATASET_LABELS: rec.labels.astype(np.float64),
    }
    if rec.stimuli is not None:
        tensors[DATASET_STIMULI] = rec.stimuli
    path = save_tensors(path, tensors)
    atomic_write_text(sidecar_path(path), json.dumps(rec.meta.model_dump(), indent=2, sort_keys=True) + "\n")
    return path


def load_recording(path: Path | str) -> Recording:
    tensors = load_tensors(path)
    missing = {DATASET_SIGNAL, DATASET_COORDS, DATASET_LABELS} - tensors.keys()
    if missing:
        raise UsageError(f"dataset file {path} lacks entries {sorted(missing)}")
    meta_path = sidecar_path(path)
    meta = RecordingMeta.model_validate_json(meta_path.read_text()) if meta_path.exists() else RecordingMeta()
    return Recording(
        signal=tensors[DATASET_SIGNAL],
        voxel_coords=tensors[DATASET_COORDS],
        labels=tensors[DATASET_LABELS].astype(np.int64),
        stimuli=tensors.get(DATASET_STIMULI),
        meta=meta,
    )
