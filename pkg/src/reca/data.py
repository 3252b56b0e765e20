"""MNIST-style dataset discovery and the train/validation/test split."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .idx import load_idx

DATA_ENV = "RECA_DATA"
DEFAULT_ROOT = "/root/data/mnist"
FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
VALIDATION_SIZE = 5000


def data_root(explicit: str | os.PathLike | None = None) -> Path:
    return Path(explicit or os.environ.get(DATA_ENV) or DEFAULT_ROOT)


def find_files(root: str | os.PathLike | None = None) -> dict[str, Path]:
    """Locate the four IDX files, accepting plain or .gz names."""
    base = data_root(root)
    found = {}
    for key, name in FILES.items():
        for candidate in (base / name, base / f"{name}.gz", base / name.replace("-idx", ".idx")):
            if candidate.is_file():
                found[key] = candidate
                break
        else:
            raise FileNotFoundError(f"missing {name}[.gz] under {base}")
    return found


def dataset_available(root: str | os.PathLike | None = None) -> bool:
    try:
        find_files(root)
    except FileNotFoundError:
        return False
    return True


@dataclass
class DatasetSplit:
    train_images: np.ndarray
    train_labels: np.ndarray
    val_images: np.ndarray
    val_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray
    sources: dict[str, Path] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("train", "val", "test"):
            imgs, labels = getattr(self, f"{name}_images"), getattr(self, f"{name}_labels")
            if len(imgs) != len(labels):
                raise ValueError(f"{name}: {len(imgs)} images but {len(labels)} labels")

    def sizes(self) -> dict[str, int]:
        return {"train": len(self.train_labels), "validation": len(self.val_labels), "test": len(self.test_labels)}


def split_training(images, labels, validation: int = VALIDATION_SIZE, shuffle_seed: int | None = None):
    """Hold out `validation` samples: the file tail by default, a seeded random subset otherwise."""
    n = len(labels)
    if not 0 < validation < n:
        raise ValueError(f"validation size {validation} out of range for {n} samples")
    if shuffle_seed is None:
        order = np.arange(n)
    else:
        order = np.random.default_rng(shuffle_seed).permutation(n)
    tr, va = np.sort(order[: n - validation]), np.sort(order[n - validation:])
    return images[tr], labels[tr], images[va], labels[va]


def load_split(
    root: str | os.PathLike | None = None,
    validation: int = VALIDATION_SIZE,
    shuffle_seed: int | None = None,
) -> DatasetSplit:
    files = find_files(root)
    images = load_idx(files["train_images"])
    labels = load_idx(files["train_labels"])
    if len(images) != len(labels):
        raise ValueError("train images and labels disagree in count")
    tr_x, tr_y, va_x, va_y = split_training(images, labels, validation, shuffle_seed)
    return DatasetSplit(
        tr_x, tr_y, va_x, va_y,
        load_idx(files["test_images"]), load_idx(files["test_labels"]),
        sources=files,
    )


def subset(images, labels, count: int):
    return images[:count], labels[:count]
