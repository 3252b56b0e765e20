"""Bitplane reservoir: image -> ECA row/column evolution -> pooled feature vector.

Two routes compute the same thing:

* the tensor route (``decompose_bitplanes``, ``iterate_rows``,
  ``iterate_columns``, ``combine_xor``, ``recompose``) keeps one boolean layer
  per bit and evaluates rules through the truth table;
* the packed route (``extract_features_batch``) keeps the image as uint8 and
  lets bit ``j`` of every pixel play the role of layer ``j``. Layers never
  interact, so a rule evaluated with bitwise operators advances all eight
  layers at once.

Arrays follow numpy image convention: shape ``(h, w)``, rows first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eca import Rule, apply_rule_bitwise, decode_rule, step_row

__all__ = [
    "BitPlaneTensor",
    "decompose_bitplanes",
    "recompose",
    "iterate_rows",
    "iterate_columns",
    "combine_xor",
    "maxpool_2x2",
    "feature_length",
    "reservoir_slices",
    "extract_features",
    "extract_features_batch",
]


@dataclass(frozen=True)
class BitPlaneTensor:
    """``bits[j]`` is the boolean layer holding bit ``j`` of every pixel."""

    bits: np.ndarray  # (B, h, w) bool

    def __post_init__(self):
        if self.bits.ndim != 3 or self.bits.dtype != bool:
            raise ValueError("bits must be a (B, h, w) boolean array")

    @property
    def depth(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape[1], self.bits.shape[2]

    def transpose(self) -> "BitPlaneTensor":
        return BitPlaneTensor(np.ascontiguousarray(self.bits.transpose(0, 2, 1)))

    def __eq__(self, other):
        return isinstance(other, BitPlaneTensor) and np.array_equal(self.bits, other.bits)

    __hash__ = None


def _check_image(img, depth: int) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a non-empty 2-D image, got shape {img.shape}")
    if not np.issubdtype(img.dtype, np.integer):
        raise TypeError("image pixels must be integers")
    if img.min() < 0 or img.max() >= 2**depth:
        raise ValueError(f"pixel values must lie in [0, {2**depth - 1}]")
    return img


def decompose_bitplanes(img, depth: int = 8) -> BitPlaneTensor:
    img = _check_image(img, depth).astype(np.int64)
    bits = np.stack([((img >> j) & 1).astype(bool) for j in range(depth)])
    return BitPlaneTensor(bits)


def recompose(t: BitPlaneTensor) -> np.ndarray:
    weights = (1 << np.arange(t.depth, dtype=np.int64))[:, None, None]
    out = (t.bits.astype(np.int64) * weights).sum(axis=0)
    return out.astype(np.uint8) if t.depth <= 8 else out


def iterate_rows(t: BitPlaneTensor, rule, k: int = 1) -> BitPlaneTensor:
    """Apply ``k`` ECA steps to every row of every layer."""
    rule = decode_rule(rule)
    bits = t.bits
    for _ in range(k):
        bits = step_row(bits, rule)
    return BitPlaneTensor(bits)


def iterate_columns(t: BitPlaneTensor, rule, k: int = 1) -> BitPlaneTensor:
    rule = decode_rule(rule)
    bits = t.bits.transpose(0, 2, 1)
    for _ in range(k):
        bits = step_row(bits, rule)
    return BitPlaneTensor(np.ascontiguousarray(bits.transpose(0, 2, 1)))


def combine_xor(r: BitPlaneTensor, c: BitPlaneTensor) -> BitPlaneTensor:
    if r.bits.shape != c.bits.shape:
        raise ValueError(f"shape mismatch: {r.bits.shape} vs {c.bits.shape}")
    return BitPlaneTensor(r.bits ^ c.bits)


def maxpool_2x2(m) -> np.ndarray:
    """2x2 max pooling with stride 2 over the last two axes.

    Odd sizes are zero-padded on the bottom/right, so the output is
    ``ceil(h/2) x ceil(w/2)``.
    """
    m = np.asarray(m)
    h, w = m.shape[-2:]
    ph, pw = h % 2, w % 2
    if ph or pw:
        pad = [(0, 0)] * (m.ndim - 2) + [(0, ph), (0, pw)]
        m = np.pad(m, pad)
        h, w = h + ph, w + pw
    blocks = m.reshape(*m.shape[:-2], h // 2, 2, w // 2, 2)
    return blocks.max(axis=(-3, -1))


def feature_length(h: int, w: int, iterations: int) -> int:
    return iterations * ((h + 1) // 2) * ((w + 1) // 2)


def reservoir_slices(img, rule, iterations: int, depth: int = 8) -> list[np.ndarray]:
    """Unpooled reservoir states through the tensor route.

    Slice 0 is the image itself; slice ``k >= 1`` recomposes
    ``rows^k(u) XOR cols^k(u)``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    rule = decode_rule(rule)
    t = decompose_bitplanes(img, depth)
    slices = [recompose(t)]
    rows, cols = t, t
    for _ in range(1, iterations):
        rows = iterate_rows(rows, rule)
        cols = iterate_columns(cols, rule)
        slices.append(recompose(combine_xor(rows, cols)))
    return slices


def extract_features(img, rule, iterations: int, depth: int = 8) -> np.ndarray:
    """Feature vector of one image: pooled slices, slice-major then row-major."""
    pooled = [maxpool_2x2(s) for s in reservoir_slices(img, rule, iterations, depth)]
    return np.concatenate([p.ravel() for p in pooled])


def _shift_left_neighbour(x: np.ndarray, axis: int) -> np.ndarray:
    """Value of the cell one step lower along ``axis`` (0 past the edge)."""
    out = np.zeros_like(x)
    src = [slice(None)] * x.ndim
    dst = [slice(None)] * x.ndim
    src[axis], dst[axis] = slice(None, -1), slice(1, None)
    out[tuple(dst)] = x[tuple(src)]
    return out


def _shift_right_neighbour(x: np.ndarray, axis: int) -> np.ndarray:
    out = np.zeros_like(x)
    src = [slice(None)] * x.ndim
    dst = [slice(None)] * x.ndim
    src[axis], dst[axis] = slice(1, None), slice(None, -1)
    out[tuple(dst)] = x[tuple(src)]
    return out


def _packed_step(x: np.ndarray, rule: Rule, axis: int) -> np.ndarray:
    return apply_rule_bitwise(
        _shift_left_neighbour(x, axis), x, _shift_right_neighbour(x, axis), rule
    )


def extract_features_batch(
    images, rule, iterations: int, chunk: int = 2048, out: np.ndarray | None = None
) -> np.ndarray:
    """Feature matrix for a stack of uint8 images ``(n, h, w)``.

    Returns an ``(n, iterations * ceil(h/2) * ceil(w/2))`` uint8 array whose
    rows equal ``extract_features`` of each image.
    """
    images = np.asarray(images)
    if images.ndim == 2:
        images = images[None]
    if images.dtype != np.uint8:
        raise TypeError("packed route expects uint8 images")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    rule = decode_rule(rule)
    n, h, w = images.shape
    per_slice = ((h + 1) // 2) * ((w + 1) // 2)
    if out is None:
        out = np.empty((n, iterations * per_slice), dtype=np.uint8)
    for start in range(0, n, chunk):
        u = images[start:start + chunk]
        rows, cols = u, u
        dst = out[start:start + len(u)]
        dst[:, :per_slice] = maxpool_2x2(u).reshape(len(u), -1)
        for k in range(1, iterations):
            rows = _packed_step(rows, rule, axis=2)
            cols = _packed_step(cols, rule, axis=1)
            pooled = maxpool_2x2(rows ^ cols)
            dst[:, k * per_slice:(k + 1) * per_slice] = pooled.reshape(len(u), -1)
    return out
