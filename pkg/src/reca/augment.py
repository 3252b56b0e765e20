"""Elastic distortions for expanding a handwritten-digit training set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates


@dataclass(frozen=True)
class DistortionParams:
    """Displacement magnitude ``alpha`` and smoothing ``sigma`` (both in pixels).

    ``normalize`` selects how the smoothed field is scaled before multiplying
    by ``alpha``: ``"none"`` keeps the raw Gaussian-smoothed uniform noise,
    ``"max"`` rescales it so the largest displacement is exactly ``alpha``.
    """

    alpha: float = 30.0
    sigma: float = 5.0
    seed: int = 0
    normalize: str = "none"

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.normalize not in ("none", "max"):
            raise ValueError(f"unknown normalization {self.normalize!r}")


def displacement_field(shape, params: DistortionParams, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed random (dy, dx) field in pixels."""
    fields = []
    for _ in range(2):
        noise = rng.uniform(-1.0, 1.0, size=shape)
        # truncate at 3 sigma; zero outside the image
        fields.append(gaussian_filter(noise, params.sigma, mode="constant", cval=0.0, truncate=3.0))
    dy, dx = fields
    if params.normalize == "max":
        peak = np.sqrt(dy**2 + dx**2).max()
        if peak > 0:
            dy, dx = dy / peak, dx / peak
    return dy * params.alpha, dx * params.alpha


def elastic_distort(img, params: DistortionParams, rng: np.random.Generator | None = None) -> np.ndarray:
    """Warp ``img`` by a random smooth displacement field.

    Uses bilinear resampling with zero fill outside the image; the result is
    rounded back to the input dtype and clipped to its range. ``rng``
    overrides the stream seeded from ``params.seed``.
    """
    img = np.asarray(img)
    if params.alpha == 0:
        return img.copy()
    if rng is None:
        rng = np.random.default_rng(params.seed)
    dy, dx = displacement_field(img.shape, params, rng)
    rows, cols = np.meshgrid(np.arange(img.shape[0]), np.arange(img.shape[1]), indexing="ij")
    coords = np.array([rows + dy, cols + dx])
    warped = map_coordinates(img.astype(np.float64), coords, order=1, mode="constant", cval=0.0)
    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        warped = np.clip(np.rint(warped), info.min, info.max)
    return warped.astype(img.dtype)


def expand_dataset(images, labels, params: DistortionParams, copies: int) -> tuple[np.ndarray, np.ndarray]:
    """Originals first, then ``copies`` rounds of distorted versions.

    Image ``i`` in round ``c`` draws from ``default_rng([params.seed, c, i])``,
    so any single sample can be regenerated independently of the others.
    """
    if copies < 0:
        raise ValueError("copies must be >= 0")
    images = np.asarray(images)
    labels = np.asarray(labels)
    if copies == 0:
        return images.copy(), labels.copy()
    out = np.empty((len(images) * (copies + 1),) + images.shape[1:], dtype=images.dtype)
    out[: len(images)] = images
    for c in range(copies):
        base = (c + 1) * len(images)
        for i, img in enumerate(images):
            out[base + i] = elastic_distort(img, params, np.random.default_rng([params.seed, c, i]))
    return out, np.tile(labels, copies + 1)
