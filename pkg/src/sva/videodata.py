"""Synthetic moving-square videos, feature extraction, and dataset I/O.

A video is a bright square translating across a noisy background; the class
label is the compass direction of motion. Positions and steps are integers so
that with zero noise every frame contains exactly ``side**2`` pixels equal to
1.0 and everything else equal to 0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ._util import mix_seed

# (row step, col step) per class: E, S, W, N, then the four diagonals.
COMPASS = ((0, 1), (1, 0), (0, -1), (-1, 0), (1, 1), (1, -1), (-1, -1), (-1, 1))

POOL_GRID = 8
STAT_FEATURES = 4
FEATURE_DIM = POOL_GRID * POOL_GRID + STAT_FEATURES

DATASET_MAGIC = b"SVAD"
DATASET_VERSION = 1


@dataclass(frozen=True)
class GenParams:
    """Generator knobs. ``noise`` is the amplitude of additive uniform
    background noise drawn from [0, noise); the square itself clamps back to
    exactly 1.0."""

    frames: int = 16
    height: int = 32
    width: int = 32
    channels: int = 1
    class_count: int = 4
    square_side: int = 8
    speed: int = 1
    noise: float = 0.05

    def __post_init__(self) -> None:
        if self.frames < 2:
            raise ValueError("need at least 2 frames")
        if min(self.height, self.width, self.channels) < 1:
            raise ValueError("degenerate frame shape")
        if not 1 <= self.class_count <= len(COMPASS):
            raise ValueError(f"class_count must be in [1, {len(COMPASS)}]")
        if self.square_side < 1 or self.speed < 1:
            raise ValueError("square_side and speed must be positive")
        if not 0.0 <= self.noise < 1.0:
            raise ValueError("noise must be in [0, 1)")


@dataclass
class Video:
    """One clip, float64 pixels in [0, 1], shape (T, H, W, C)."""

    frames: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.frames, dtype=np.float64)
        if arr.ndim != 4:
            raise ValueError(f"expected (T,H,W,C), got shape {arr.shape}")
        if arr.shape[0] < 2:
            raise ValueError("a video needs at least 2 frames")
        if not np.isfinite(arr).all():
            raise ValueError("non-finite pixel values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        self.frames = arr

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.frames.shape


@dataclass
class LabeledVideo:
    video: Video
    label: int

    def __post_init__(self) -> None:
        if self.label < 0:
            raise ValueError("label must be non-negative")


@dataclass
class Dataset:
    items: list[LabeledVideo]
    class_count: int
    generation_seed: int = 0

    def __post_init__(self) -> None:
        if not self.items:
            raise ValueError("empty dataset")
        shape = self.items[0].video.shape
        for item in self.items:
            if item.video.shape != shape:
                raise ValueError("all videos must share one shape")
            if item.label >= self.class_count:
                raise ValueError("label out of range for class_count")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def video_shape(self) -> tuple[int, int, int, int]:
        return self.items[0].video.shape


@dataclass
class FeatureSequence:
    """Per-frame descriptors, shape (T, FEATURE_DIM)."""

    features: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.asarray(self.features, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != FEATURE_DIM:
            raise ValueError(f"expected (T, {FEATURE_DIM}), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("non-finite feature values")
        self.features = arr

    def __len__(self) -> int:
        return self.features.shape[0]


def _start_range(extent: int, side: int, travel: int, step: int) -> tuple[int, int]:
    # inclusive range of valid start offsets along one axis
    if step > 0:
        lo, hi = 0, extent - side - travel
    elif step < 0:
        lo, hi = travel, extent - side
    else:
        lo, hi = 0, extent - side
    if hi < lo:
        raise ValueError("square does not fit: shrink side/speed or grow frames")
    return lo, hi


def generate_video(seed: int, class_id: int, params: GenParams | None = None) -> LabeledVideo:
    """Deterministically render one labeled clip for (seed, class_id)."""
    params = params or GenParams()
    if not 0 <= class_id < params.class_count:
        raise ValueError(f"class_id {class_id} out of range")
    d_row, d_col = COMPASS[class_id]
    travel = (params.frames - 1) * params.speed
    rng = np.random.default_rng(mix_seed(seed, class_id))
    row_lo, row_hi = _start_range(params.height, params.square_side,
                                  travel, d_row)
    col_lo, col_hi = _start_range(params.width, params.square_side,
                                  travel, d_col)
    row = int(rng.integers(row_lo, row_hi + 1))
    col = int(rng.integers(col_lo, col_hi + 1))

    shape = (params.frames, params.height, params.width, params.channels)
    clip = rng.uniform(0.0, params.noise, size=shape) if params.noise > 0 \
        else np.zeros(shape)
    side = params.square_side
    for t in range(params.frames):
        r = row + t * params.speed * d_row
        c = col + t * params.speed * d_col
        clip[t, r:r + side, c:c + side, :] = 1.0
    np.clip(clip, 0.0, 1.0, out=clip)
    return LabeledVideo(Video(clip), class_id)


def generate_dataset(seed: int, per_class: int, params: GenParams | None = None) -> Dataset:
    """Class-major dataset of ``per_class`` clips for each class."""
    params = params or GenParams()
    if per_class < 1:
        raise ValueError("per_class must be positive")
    items = []
    for class_id in range(params.class_count):
        for j in range(per_class):
            item_seed = mix_seed(seed, class_id * per_class + j)
            items.append(generate_video(item_seed, class_id, params))
    return Dataset(items, params.class_count, generation_seed=seed)


def extract_features(video: Video | np.ndarray) -> FeatureSequence:
    """8x8 average-pooled grayscale plus 4 intensity/motion statistics.

    The motion stats use the previous frame, with frame -1 defined as frame 0
    so row 0 has zero temporal difference.
    """
    frames = video.frames if isinstance(video, Video) else np.asarray(video, dtype=np.float64)
    t, h, w, _ = frames.shape
    if h % POOL_GRID or w % POOL_GRID:
        raise ValueError(f"frame sides must be multiples of {POOL_GRID}")
    gray = frames.mean(axis=3)
    pooled = gray.reshape(t, POOL_GRID, h // POOL_GRID,
                          POOL_GRID, w // POOL_GRID).mean(axis=(2, 4))
    prev = np.concatenate([gray[:1], gray[:-1]], axis=0)
    diff = np.abs(gray - prev)
    stats = np.stack([
        gray.mean(axis=(1, 2)),
        gray.std(axis=(1, 2)),
        diff.mean(axis=(1, 2)),
        diff.max(axis=(1, 2)),
    ], axis=1)
    return FeatureSequence(np.hstack([pooled.reshape(t, -1), stats]))


def save_dataset(path, dataset: Dataset) -> None:
    t, h, w, c = dataset.video_shape
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<IIIIIII", DATASET_VERSION, dataset.class_count,
                             len(dataset.items), t, h, w, c))
        for item in dataset.items:
            fh.write(struct.pack("<I", item.label))
            fh.write(np.ascontiguousarray(item.video.frames, dtype="<f4").tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != DATASET_MAGIC:
            raise ValueError(f"not a dataset file (magic {magic!r})")
        version, cls, count, t, h, w, c = struct.unpack("<IIIIIII", fh.read(28))
        if version != DATASET_VERSION:
            raise ValueError(f"unsupported dataset version {version}")
        n_pix = t * h * w * c
        items = []
        for _ in range(count):
            (label,) = struct.unpack("<I", fh.read(4))
            raw = fh.read(4 * n_pix)
            if len(raw) != 4 * n_pix:
                raise ValueError("truncated dataset file")
            frames = np.frombuffer(raw, dtype="<f4").astype(np.float64)
            items.append(LabeledVideo(Video(frames.reshape(t, h, w, c)), label))
    return Dataset(items, cls)
