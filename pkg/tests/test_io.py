import gzip
import struct

import numpy as np
import pytest

from reca import weightfile
from reca.idx import IdxFormatError, load_idx, parse_idx, write_idx
from reca.readout import ReadoutModel, logits, quantize_weights


def test_labels_fixture(tmp_path):
    path = tmp_path / "labels"
    path.write_bytes(struct.pack(">II", 0x801, 2) + bytes([7, 1]))
    assert load_idx(path).tolist() == [7, 1]


def test_bad_magic():
    with pytest.raises(IdxFormatError) as info:
        parse_idx(struct.pack(">II", 0x12345678, 0))
    assert info.value.offset == 0


def test_truncated_payload():
    data = struct.pack(">IIII", 0x803, 2, 3, 3) + bytes(10)
    with pytest.raises(IdxFormatError, match="truncated"):
        parse_idx(data)


def test_count_mismatch():
    with pytest.raises(IdxFormatError, match="count mismatch"):
        parse_idx(struct.pack(">II", 0x801, 2) + bytes(3))


@pytest.mark.parametrize("suffix", ["", ".gz"])
def test_idx_roundtrip(tmp_path, suffix):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, (5, 4, 3), dtype=np.uint8)
    labels = rng.integers(0, 10, 5, dtype=np.uint8)
    write_idx(tmp_path / f"i{suffix}", imgs)
    write_idx(tmp_path / f"l{suffix}", labels)
    assert np.array_equal(load_idx(tmp_path / f"i{suffix}"), imgs)
    assert np.array_equal(load_idx(tmp_path / f"l{suffix}"), labels)


def test_gzip_detected_by_content(tmp_path):
    path = tmp_path / "plain-name"
    with gzip.open(path, "wb") as fh:
        fh.write(struct.pack(">II", 0x801, 1) + b"\x03")
    assert load_idx(path).tolist() == [3]


def _model(bias=True):
    rng = np.random.default_rng(1)
    return ReadoutModel(rng.normal(size=(12, 4)), rng.normal(size=4) if bias else None)


@pytest.mark.parametrize("bias", [True, False])
def test_weightfile_float_roundtrip(tmp_path, bias):
    model = _model(bias)
    weightfile.save(tmp_path / "w.rcw", model)
    back = weightfile.load(tmp_path / "w.rcw")
    assert np.array_equal(back.weights, model.weights)
    assert (back.bias is None) == (not bias)
    if bias:
        assert np.array_equal(back.bias, model.bias)


@pytest.mark.parametrize("bias", [True, False])
def test_weightfile_int8_roundtrip(tmp_path, bias):
    model = quantize_weights(_model(bias))
    weightfile.save(tmp_path / "q.rcw", model)
    back = weightfile.load(tmp_path / "q.rcw")
    assert np.array_equal(back.quantized.values, model.quantized.values)
    assert np.array_equal(back.quantized.scales, model.quantized.scales)
    x = np.random.default_rng(2).integers(0, 256, (6, 12), dtype=np.uint8)
    assert np.array_equal(logits(back, x), logits(model, x))


def test_weightfile_layout():
    model = quantize_weights(_model())
    data = weightfile.dumps(model)
    magic, version, d, q, dtype, bias = struct.unpack_from("<4sHIIBB", data)
    assert (magic, version, d, q, dtype, bias) == (b"RCW1", 1, 12, 4, 1, 1)
    payload = np.frombuffer(data[16:16 + 13 * 4], dtype=np.int8)
    # column-major: the first 13 bytes are column 0 including the bias row
    assert np.array_equal(payload[:13], model.quantized.values[:, 0])
    scales = np.frombuffer(data[16 + 52:], dtype="<f4")
    assert np.array_equal(scales.astype(float), model.quantized.scales)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda b: b"XXXX" + b[4:], "magic"),
        (lambda b: b[:4] + b"\x02\x00" + b[6:], "version"),
        (lambda b: b[:-1], "payload"),
        (lambda b: b[:14] + b"\x07" + b[15:], "dtype"),
        (lambda b: b[:10], "truncated"),
    ],
)
def test_weightfile_errors(mutate, message):
    data = weightfile.dumps(quantize_weights(_model()))
    with pytest.raises(weightfile.WeightFileError, match=message):
        weightfile.loads(mutate(data))
