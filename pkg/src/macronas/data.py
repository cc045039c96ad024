"""Datasets: binary loaders, partial splits, and a synthetic generator.

Loaders scale pixel values to [0,1] and then standardize per channel with
the loaded data's own statistics; the stats are kept on the dataset.  The
partial split carves small disjoint train/validation subsets out of a
dataset for cheap fitness estimation during search.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3x32x32 pixels
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataFormatError(ValueError):
    """Malformed dataset files (bad magic, truncation, label range)."""


@dataclass
class Dataset:
    images: np.ndarray  # float32 (N, C, H, W), standardized
    labels: np.ndarray  # int64 (N,)
    num_classes: int
    name: str
    mean: np.ndarray  # per-channel stats used for standardization
    std: np.ndarray

    def __post_init__(self):
        if self.images.ndim != 4 or len(self.labels) != len(self.images):
            raise ValueError("images must be (N,C,H,W) with one label per image")
        if len(self.images) < 1:
            raise ValueError("dataset must be non-empty")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError("labels out of range")

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices: np.ndarray, name: str) -> "Dataset":
        return Dataset(
            images=self.images[indices],
            labels=self.labels[indices],
            num_classes=self.num_classes,
            name=name,
            mean=self.mean,
            std=self.std,
        )


@dataclass
class PartialSplit:
    partial_train: Dataset
    partial_valid: Dataset
    train_frac: float
    valid_frac: float
    seed: int


def _standardize(raw: np.ndarray, name: str, labels: np.ndarray, num_classes: int) -> Dataset:
    mean = raw.mean(axis=(0, 2, 3))
    std = raw.std(axis=(0, 2, 3))
    std = np.where(std < 1e-8, 1.0, std)
    images = (raw - mean[None, :, None, None]) / std[None, :, None, None]
    return Dataset(
        images=images.astype(np.float32),
        labels=labels.astype(np.int64),
        num_classes=num_classes,
        name=name,
        mean=mean,
        std=std,
    )


def _load_cifar_binary(path: Path) -> tuple[np.ndarray, np.ndarray]:
    if path.is_dir():
        files = sorted(path.glob("data_batch_*.bin"))
        if not files:
            raise DataFormatError(f"no data_batch_*.bin files in {path}")
    else:
        files = [path]
    images, labels = [], []
    for f in files:
        blob = f.read_bytes()
        if len(blob) == 0 or len(blob) % CIFAR_RECORD_BYTES != 0:
            raise DataFormatError(f"{f}: truncated file ({len(blob)} bytes)")
        records = np.frombuffer(blob, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        batch_labels = records[:, 0]
        if batch_labels.max() > 9:
            raise DataFormatError(f"{f}: label out of range for 10-class records")
        labels.append(batch_labels)
        images.append(records[:, 1:].reshape(-1, 3, 32, 32))
    return np.concatenate(images), np.concatenate(labels)


def _read_idx(path: Path, expected_magic: int, dims: int) -> np.ndarray:
    blob = path.read_bytes()
    header = 4 + 4 * dims
    if len(blob) < header:
        raise DataFormatError(f"{path}: truncated header")
    magic = struct.unpack(">i", blob[:4])[0]
    if magic != expected_magic:
        raise DataFormatError(f"{path}: magic number {magic:#010x}, expected {expected_magic:#010x}")
    shape = struct.unpack(f">{dims}i", blob[4:header])
    count = int(np.prod(shape))
    if len(blob) - header != count:
        raise DataFormatError(f"{path}: payload is {len(blob) - header} bytes, expected {count}")
    return np.frombuffer(blob, dtype=np.uint8, offset=header).reshape(shape)


def _idx_labels_path(images_path: Path) -> Path:
    name = images_path.name
    for old, new in (("idx3", "idx1"), ("images", "labels")):
        name = name.replace(old, new)
    return images_path.with_name(name)


def load_dataset(path: str | Path, fmt: str, labels_path: str | Path | None = None) -> Dataset:
    """Load a dataset from disk.

    ``cifar-binary`` accepts a single batch file or a directory holding
    ``data_batch_*.bin``; ``idx-pair`` takes the images file, with the
    labels file either given explicitly or derived by the usual
    idx3->idx1 naming convention.
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"dataset path does not exist: {path}")
    if fmt == "cifar-binary":
        raw, labels = _load_cifar_binary(path)
        num_classes = 10
    elif fmt == "idx-pair":
        labels_file = Path(labels_path) if labels_path else _idx_labels_path(path)
        if labels_file == path or not labels_file.exists():
            raise DataFormatError(f"cannot locate labels file for {path}")
        raw = _read_idx(path, IDX_IMAGES_MAGIC, 3)[:, None, :, :]  # (N,1,H,W)
        labels = _read_idx(labels_file, IDX_LABELS_MAGIC, 1)
        if len(labels) != len(raw):
            raise DataFormatError("image/label counts differ")
        num_classes = int(labels.max()) + 1
    else:
        raise DataFormatError(f"unknown dataset format {fmt!r}")
    return _standardize(raw.astype(np.float64) / 255.0, path.stem or path.name, labels, num_classes)


def partial_split(
    dataset: Dataset, train_frac: float = 0.08, valid_frac: float = 0.02, seed: int = 0
) -> PartialSplit:
    """Disjoint uniform subsample: ``round(frac * N)`` items per side."""
    if train_frac + valid_frac > 1.0:
        raise ValueError("fractions exceed the dataset")
    n = len(dataset)
    n_train = int(round(train_frac * n))
    n_valid = int(round(valid_frac * n))
    if n_train < 1 or n_valid < 1:
        raise ValueError(f"fractions yield empty split ({n_train}/{n_valid} of {n})")
    order = np.random.default_rng(seed).permutation(n)
    return PartialSplit(
        partial_train=dataset.subset(np.sort(order[:n_train]), f"{dataset.name}[partial-train]"),
        partial_valid=dataset.subset(
            np.sort(order[n_train : n_train + n_valid]), f"{dataset.name}[partial-valid]"
        ),
        train_frac=train_frac,
        valid_frac=valid_frac,
        seed=seed,
    )


def holdout_split(dataset: Dataset, valid_frac: float = 0.2, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Deterministic train/validation split of one dataset."""
    if not 0.0 < valid_frac < 1.0:
        raise ValueError("valid_frac must be in (0,1)")
    n = len(dataset)
    n_valid = max(1, int(round(valid_frac * n)))
    if n_valid >= n:
        raise ValueError("holdout leaves no training data")
    order = np.random.default_rng([seed, 0xA0]).permutation(n)
    return (
        dataset.subset(np.sort(order[n_valid:]), f"{dataset.name}[train]"),
        dataset.subset(np.sort(order[:n_valid]), f"{dataset.name}[valid]"),
    )


@dataclass
class SynthSpec:
    num_classes: int = 10
    n: int = 1000
    channels: int = 3
    height: int = 8
    width: int = 8
    noise: float = 1.0

    def __post_init__(self):
        if self.num_classes < 2 or self.n < self.num_classes:
            raise ValueError("need >= 2 classes and >= 1 sample per class")
        if min(self.channels, self.height, self.width) < 1 or self.noise < 0:
            raise ValueError("invalid synthetic spec")


def synth_dataset(spec: SynthSpec, seed: int = 0) -> Dataset:
    """Class-conditional Gaussian blobs: distinct mean pattern per class.

    Classes are balanced (any remainder goes to the lowest class indices)
    and the sample order is shuffled; everything is deterministic for a
    given seed.
    """
    rng = np.random.default_rng([seed, 0x5D])
    shape = (spec.channels, spec.height, spec.width)
    means = rng.normal(0.0, 1.0, (spec.num_classes,) + shape)
    per_class = spec.n // spec.num_classes
    remainder = spec.n - per_class * spec.num_classes
    counts = [per_class + (1 if c < remainder else 0) for c in range(spec.num_classes)]
    labels = np.repeat(np.arange(spec.num_classes), counts)
    raw = means[labels] + spec.noise * rng.normal(0.0, 1.0, (spec.n,) + shape)
    order = rng.permutation(spec.n)
    return _standardize(raw[order], f"synth{spec.num_classes}", labels[order], spec.num_classes)


def cutout(image: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Zero one size x size square at a random center, clipped to bounds."""
    if size <= 0:
        raise ValueError("cutout size must be positive")
    if image.ndim != 3:
        raise ValueError("image must be (C,H,W)")
    _, h, w = image.shape
    cy = int(rng.integers(h))
    cx = int(rng.integers(w))
    half = size // 2
    y0, y1 = max(0, cy - half), min(h, cy - half + size)
    x0, x1 = max(0, cx - half), min(w, cx - half + size)
    out = image.copy()
    out[:, y0:y1, x0:x1] = 0.0
    return out
