"""RCW1 weight files.

Layout (little-endian)::

    b"RCW1" | u16 version=1 | u32 D | u32 Q | u8 dtype | u8 bias flag | payload [| scales]

``dtype`` 0 stores float64 weights, 1 stores int8 weights followed by ``Q``
float32 per-column scales. The payload has ``D + bias`` rows and ``Q``
columns in column-major order. For dtype 0 the optional extra row is the
additive bias; for dtype 1 it is the quantized weight applied to the
constant input 255.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .quant import QuantizedWeights
from .readout import ReadoutModel

MAGIC = b"RCW1"
VERSION = 1
DTYPE_FLOAT64 = 0
DTYPE_INT8 = 1
BIAS_INPUT = 255

_HEADER = struct.Struct("<4sHIIBB")


class WeightFileError(ValueError):
    pass


def dumps(model: ReadoutModel) -> bytes:
    has_bias = model.bias is not None
    d, q = model.weights.shape
    if model.quantized is not None:
        qw = model.quantized
        if qw.bias_input != BIAS_INPUT:
            raise WeightFileError(f"RCW1 fixes the bias input at {BIAS_INPUT}")
        scales32 = qw.scales.astype("<f4")
        if not np.array_equal(scales32.astype(np.float64), qw.scales):
            raise WeightFileError("scales are not exactly representable as float32")
        header = _HEADER.pack(MAGIC, VERSION, d, q, DTYPE_INT8, int(has_bias))
        payload = np.asfortranarray(qw.values).astype(np.int8).tobytes(order="F")
        return header + payload + scales32.tobytes()
    rows = model.weights if not has_bias else np.vstack([model.weights, model.bias])
    header = _HEADER.pack(MAGIC, VERSION, d, q, DTYPE_FLOAT64, int(has_bias))
    return header + rows.astype("<f8").tobytes(order="F")


def loads(data: bytes) -> ReadoutModel:
    if len(data) < _HEADER.size:
        raise WeightFileError("truncated header")
    magic, version, d, q, dtype, bias_flag = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise WeightFileError(f"bad magic {magic!r}")
    if version != VERSION:
        raise WeightFileError(f"unsupported version {version}")
    if bias_flag not in (0, 1):
        raise WeightFileError(f"bad bias flag {bias_flag}")
    rows = d + bias_flag
    body = memoryview(data)[_HEADER.size:]
    if dtype == DTYPE_FLOAT64:
        expected = rows * q * 8
        if len(body) != expected:
            raise WeightFileError(f"payload is {len(body)} bytes, expected {expected}")
        mat = np.frombuffer(body, dtype="<f8").reshape((rows, q), order="F").astype(np.float64)
        return ReadoutModel(mat[:d], mat[d] if bias_flag else None, bias_input=BIAS_INPUT)
    if dtype == DTYPE_INT8:
        expected = rows * q + 4 * q
        if len(body) != expected:
            raise WeightFileError(f"payload is {len(body)} bytes, expected {expected}")
        values = np.frombuffer(body[: rows * q], dtype=np.int8).reshape((rows, q), order="F")
        scales = np.frombuffer(body[rows * q:], dtype="<f4").astype(np.float64)
        qw = QuantizedWeights(values.copy(), scales, has_bias=bool(bias_flag), bias_input=BIAS_INPUT)
        w, b = qw.dequantize()
        return ReadoutModel(w, b, quantized=qw, bias_input=BIAS_INPUT)
    raise WeightFileError(f"unknown dtype {dtype}")


def save(path, model: ReadoutModel) -> None:
    Path(path).write_bytes(dumps(model))


def load(path) -> ReadoutModel:
    return loads(Path(path).read_bytes())
