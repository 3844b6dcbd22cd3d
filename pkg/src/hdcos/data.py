"""Datasets: MNIST-format IDX files, synthetic Gaussian blobs, deterministic splits."""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
DATA_DIR_ENV = "HDCOS_DATA_DIR"

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    split: str = "all"
    n_classes: int | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
            raise ValueError(f"need n > 0 rows with one label each, got X {X.shape}, y {y.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        k = self.n_classes if self.n_classes is not None else int(y.max()) + 1
        if y.min() < 0 or y.max() >= k:
            raise ValueError(f"labels must lie in [0, {k})")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "n_classes", k)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def take(self, idx, split: str | None = None) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.name, split or self.split, self.n_classes)


def _open(path):
    path = Path(path)
    with open(path, "rb") as fh:
        gz = fh.read(2) == b"\x1f\x8b"
    return gzip.open(path, "rb") if gz or path.suffix == ".gz" else open(path, "rb")


def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    try:
        with _open(path) as fh:
            raw = fh.read()
    except (OSError, EOFError) as exc:
        raise IdxFormatError(f"{path}: unreadable ({exc})") from exc
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise IdxFormatError(f"{path}: truncated header")
    got = struct.unpack(">I", raw[:4])[0]
    if got != magic:
        raise IdxFormatError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    count = int(np.prod(dims, dtype=np.int64))
    if len(raw) - head < count:
        raise IdxFormatError(f"{path}: truncated payload ({len(raw) - head} of {count} bytes)")
    if len(raw) - head > count:
        raise IdxFormatError(f"{path}: {len(raw) - head - count} trailing bytes after payload")
    return np.frombuffer(raw, dtype=np.uint8, offset=head).reshape(dims)


def load_mnist_idx(images_path, labels_path, name: str = "mnist", split: str = "all") -> Dataset:
    """Read an IDX image/label pair (optionally gzip-compressed); pixels scaled to [0, 1]."""
    images = _read_idx(images_path, IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise IdxFormatError(f"{len(images)} images but {len(labels)} labels")
    X = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return Dataset(X, labels.astype(np.int64), name, split, 10)


def default_data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, Path.home() / ".cache" / "hdcos"))


def find_idx_pair(directory, split: str):
    directory = Path(directory)
    found = []
    for stem in MNIST_FILES[split]:
        for cand in (directory / f"{stem}.gz", directory / stem):
            if cand.exists():
                found.append(cand)
                break
        else:
            raise FileNotFoundError(f"no {stem}[.gz] under {directory}")
    return tuple(found)


def load_mnist(directory=None, split: str = "train", name: str = "mnist") -> Dataset:
    """Load ``train`` or ``test`` from a directory holding the standard file names.

    Fashion-MNIST uses the same names and format; pass ``name="fashion_mnist"``.
    """
    directory = Path(directory) if directory is not None else default_data_dir() / name
    images, labels = find_idx_pair(directory, split)
    return load_mnist_idx(images, labels, name, split)


def write_idx(path, array: np.ndarray, magic: int):
    """Write a uint8 array as an IDX file (gzip when the name ends in .gz)."""
    arr = np.asarray(array, dtype=np.uint8)
    raw = struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape) + arr.tobytes()
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(raw)


def synth_gaussians(n: int, d: int, classes: int = 2, separation: float = 4.0, seed: int = 0) -> Dataset:
    """Unit-variance Gaussian blobs whose neighbouring means are ``separation`` apart.

    With ``classes <= d`` the means sit on scaled coordinate axes (all pairs
    equidistant); otherwise they are spread on a circle in the first two
    coordinates.
    """
    if min(n, d, classes) < 1:
        raise ValueError("n, d and classes must be >= 1")
    rng = np.random.default_rng(seed)
    means = np.zeros((classes, d))
    if classes <= d:
        means[np.arange(classes), np.arange(classes)] = separation / np.sqrt(2.0)
    elif classes > 1:
        if d < 2:
            means[:, 0] = separation * np.arange(classes)
        else:
            ang = 2 * np.pi * np.arange(classes) / classes
            radius = separation / (2 * np.sin(np.pi / classes))
            means[:, 0], means[:, 1] = radius * np.cos(ang), radius * np.sin(ang)
    labels = rng.integers(0, classes, size=n)
    X = means[labels] + rng.standard_normal((n, d))
    return Dataset(X, labels, f"gauss{classes}x{d}", "all", classes)


def subsample(ds: Dataset, n: int, seed: int = 0) -> Dataset:
    if n > ds.n:
        raise ValueError(f"cannot draw {n} samples from a dataset of {ds.n}")
    idx = np.sort(np.random.default_rng(seed).permutation(ds.n)[:n])
    return ds.take(idx)


def split_indices(n: int, fraction: float, seed: int = 0):
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    perm = np.random.default_rng(seed).permutation(n)
    k = int(np.floor(fraction * n))
    return np.sort(perm[:k]), np.sort(perm[k:])


def split(ds: Dataset, fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    a, b = split_indices(ds.n, fraction, seed)
    return ds.take(a, "train"), ds.take(b, "test")


def mnist_subset(directory=None, n_train: int = 10_000, n_test: int = 1_000, seed: int = 0,
                 name: str = "mnist") -> tuple[Dataset, Dataset]:
    """Deterministic subsample of the official train and test splits."""
    train = subsample(load_mnist(directory, "train", name), n_train, seed)
    test = subsample(load_mnist(directory, "test", name), n_test, seed)
    return train, test
