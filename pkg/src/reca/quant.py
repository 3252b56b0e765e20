"""Symmetric 8-bit weight quantization with hardware-friendly scales.

Each output column ``q`` gets a scale ``max|W[:, q]| / 127``. The scale is then
rounded to a 16-bit mantissa times a power of two, ``scale = k * 2**e`` with
``2**15 <= k < 2**16``. Products of integer accumulators with such scales are
exact in float64, so integer (hardware) and float (software) argmax agree
bit for bit. Weights are rounded half-to-even and clamped to [-127, 127].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

QMAX = 127
MANTISSA_BITS = 16

__all__ = [
    "QMAX",
    "MANTISSA_BITS",
    "QuantizedWeights",
    "snap_scale",
    "scale_fixed_point",
    "quantize_matrix",
]


@dataclass
class QuantizedWeights:
    """int8 weight matrix plus one positive scale per output column.

    When ``has_bias`` is set the last row of ``values`` holds the bias, acting
    as a weight on a constant input of ``bias_input``.
    """

    values: np.ndarray  # (rows, Q) int8
    scales: np.ndarray  # (Q,) float64
    has_bias: bool = True
    bias_input: int = 255

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int8)
        self.scales = np.asarray(self.scales, dtype=np.float64)
        if self.values.ndim != 2 or self.scales.shape != (self.values.shape[1],):
            raise ValueError("values must be (rows, Q) with one scale per column")
        if not np.all(self.scales > 0):
            raise ValueError("scales must be positive")

    @property
    def num_features(self) -> int:
        return self.values.shape[0] - int(self.has_bias)

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]

    @property
    def global_scale(self) -> bool:
        return bool(np.all(self.scales == self.scales[0]))

    def dequantize(self) -> tuple[np.ndarray, np.ndarray | None]:
        """Real-valued ``(weights, bias)`` represented by the integers."""
        full = self.values.astype(np.float64) * self.scales
        if not self.has_bias:
            return full, None
        return full[:-1], full[-1] * self.bias_input


def snap_scale(scale):
    """Round positive scales to ``k * 2**e`` with a 16-bit mantissa ``k``."""
    scale = np.asarray(scale, dtype=np.float64)
    mant, exp = np.frexp(scale)
    k = np.round(mant * 2.0**MANTISSA_BITS)
    carry = k >= 2**MANTISSA_BITS
    k = np.where(carry, 2 ** (MANTISSA_BITS - 1), k)
    exp = exp + carry
    return np.ldexp(k, exp - MANTISSA_BITS)


def scale_fixed_point(scales) -> tuple[np.ndarray, np.ndarray]:
    """Split snapped scales into (16-bit mantissa, exponent) integer pairs."""
    mant, exp = np.frexp(np.asarray(scales, dtype=np.float64))
    k = mant * 2.0**MANTISSA_BITS
    if not np.array_equal(k, np.round(k)):
        raise ValueError("scales are not representable with a 16-bit mantissa")
    return k.astype(np.int64), (exp - MANTISSA_BITS).astype(np.int64)


def quantize_matrix(matrix, mode: str = "per_column") -> tuple[np.ndarray, np.ndarray]:
    """Quantize a real ``(rows, Q)`` matrix; returns (int8 values, scales).

    ``mode`` is ``"per_column"`` or ``"global"`` (one scale shared by every
    column, so raw integer accumulators are directly comparable). All-zero
    columns get scale 1.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if not np.all(np.isfinite(matrix)):
        raise ValueError("cannot quantize non-finite weights")
    if mode == "per_column":
        peak = np.abs(matrix).max(axis=0)
    elif mode == "global":
        peak = np.full(matrix.shape[1], np.abs(matrix).max() if matrix.size else 0.0)
    else:
        raise ValueError(f"unknown quantization mode {mode!r}")
    scales = np.where(peak > 0, snap_scale(np.where(peak > 0, peak, 1.0) / QMAX), 1.0)
    values = np.clip(np.round(matrix / scales), -QMAX, QMAX).astype(np.int8)
    return values, scales
