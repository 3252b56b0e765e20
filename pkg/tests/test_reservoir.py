import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from reca.reservoir import (
    BitPlaneTensor,
    combine_xor,
    decompose_bitplanes,
    extract_features,
    extract_features_batch,
    feature_length,
    iterate_columns,
    iterate_rows,
    maxpool_2x2,
    recompose,
    reservoir_slices,
)

images = st.tuples(st.integers(1, 9), st.integers(1, 9)).flatmap(
    lambda hw: arrays(np.uint8, hw)
)


def seed_tensor(h, w, layer, r, c, depth=8):
    bits = np.zeros((depth, h, w), dtype=bool)
    bits[layer, r, c] = True
    return BitPlaneTensor(bits)


def scalar_rule_step(row, rule_number):
    n = len(row)
    out = []
    for i in range(n):
        left = row[i - 1] if i > 0 else 0
        right = row[i + 1] if i < n - 1 else 0
        out.append((rule_number >> (4 * left + 2 * row[i] + right)) & 1)
    return out


def test_decompose_173():
    t = decompose_bitplanes(np.array([[173]], dtype=np.uint8))
    assert [int(t.bits[j, 0, 0]) for j in range(7, -1, -1)] == [1, 0, 1, 0, 1, 1, 0, 1]


def test_decompose_zero_and_full():
    assert not decompose_bitplanes(np.zeros((3, 4), dtype=np.uint8)).bits.any()
    assert decompose_bitplanes(np.full((2, 2), 255, dtype=np.uint8)).bits.all()


def test_decompose_rejects_out_of_range():
    with pytest.raises(ValueError):
        decompose_bitplanes(np.array([[256]]))
    with pytest.raises(ValueError):
        decompose_bitplanes(np.array([[-1]]))


def test_recompose_single_bit_and_full():
    assert recompose(seed_tensor(1, 1, 5, 0, 0))[0, 0] == 32
    assert recompose(BitPlaneTensor(np.ones((8, 1, 1), dtype=bool)))[0, 0] == 255


@settings(max_examples=100, deadline=None)
@given(images)
def test_roundtrip(img):
    assert np.array_equal(recompose(decompose_bitplanes(img)), img)


def test_iterate_rows_rule90_seed():
    out = iterate_rows(seed_tensor(5, 7, 0, 2, 3), 90).bits
    expected = np.zeros_like(out)
    expected[0, 2, 2] = expected[0, 2, 4] = True
    assert np.array_equal(out, expected)


def test_iterate_columns_rule90_seed():
    out = iterate_columns(seed_tensor(5, 7, 0, 2, 3), 90).bits
    expected = np.zeros_like(out)
    expected[0, 1, 3] = expected[0, 3, 3] = True
    assert np.array_equal(out, expected)


def test_rule0_annihilates():
    t = decompose_bitplanes(np.random.default_rng(0).integers(0, 256, (6, 6), dtype=np.uint8))
    assert not iterate_rows(t, 0).bits.any()
    assert not iterate_columns(t, 0).bits.any()


def test_iterate_rows_matches_scalar_oracle():
    rng = np.random.default_rng(2)
    img = rng.integers(0, 256, (6, 9), dtype=np.uint8)
    t = decompose_bitplanes(img)
    for rule in (30, 90, 110, 184):
        out = iterate_rows(t, rule).bits
        for j in range(8):
            for r in range(6):
                assert out[j, r].astype(int).tolist() == scalar_rule_step(t.bits[j, r].astype(int), rule)


def test_k_applications():
    t = decompose_bitplanes(np.random.default_rng(3).integers(0, 256, (7, 7), dtype=np.uint8))
    manual = t
    for _ in range(4):
        manual = iterate_rows(manual, 30)
    assert iterate_rows(t, 30, k=4) == manual


@pytest.mark.parametrize("rule", [30, 90, 110])
def test_transpose_equivariance(rule):
    t = decompose_bitplanes(np.random.default_rng(4).integers(0, 256, (5, 8), dtype=np.uint8))
    assert iterate_columns(t, rule) == iterate_rows(t.transpose(), rule).transpose()


def test_combine_xor():
    t = decompose_bitplanes(np.random.default_rng(5).integers(0, 256, (4, 4), dtype=np.uint8))
    zero = BitPlaneTensor(np.zeros_like(t.bits))
    assert not combine_xor(t, t).bits.any()
    assert combine_xor(t, zero) == t
    a, b = seed_tensor(4, 4, 1, 0, 0), seed_tensor(4, 4, 6, 3, 2)
    assert np.array_equal(combine_xor(a, b).bits, a.bits | b.bits)
    with pytest.raises(ValueError):
        combine_xor(t, seed_tensor(4, 5, 0, 0, 0))


def test_layer_isolation():
    rng = np.random.default_rng(6)
    t = decompose_bitplanes(rng.integers(0, 256, (10, 10), dtype=np.uint8))
    bits = t.bits.copy()
    bits[3] = False
    zeroed = BitPlaneTensor(bits)
    for step in (iterate_rows, iterate_columns):
        full, cut = step(t, 30, k=3).bits, step(zeroed, 30, k=3).bits
        assert not cut[3].any()
        others = [j for j in range(8) if j != 3]
        assert np.array_equal(full[others], cut[others])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rule90_superposition(seed):
    rng = np.random.default_rng(seed)
    a = decompose_bitplanes(rng.integers(0, 256, (8, 8), dtype=np.uint8))
    b = decompose_bitplanes(rng.integers(0, 256, (8, 8), dtype=np.uint8))
    ab = BitPlaneTensor(a.bits ^ b.bits)
    for step in (iterate_rows, iterate_columns):
        assert np.array_equal(step(ab, 90, k=3).bits, step(a, 90, k=3).bits ^ step(b, 90, k=3).bits)


def test_maxpool_examples():
    assert maxpool_2x2(np.array([[3, 7], [1, 2]])).tolist() == [[7]]
    assert not maxpool_2x2(np.zeros((6, 4))).any()
    assert maxpool_2x2(np.ones((28, 28))).shape == (14, 14)


@settings(max_examples=100, deadline=None)
@given(images)
def test_maxpool_scalar_reference(m):
    out = maxpool_2x2(m)
    h, w = m.shape
    assert out.shape == ((h + 1) // 2, (w + 1) // 2)
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            window = [int(m[r, c]) for r in (2 * i, 2 * i + 1) for c in (2 * j, 2 * j + 1) if r < h and c < w]
            # zero padding joins the window when it exists
            if len(window) < 4:
                window.append(0)
            assert out[i, j] == max(window)
            assert out[i, j] >= min(window)


def test_feature_length_mnist():
    img = np.random.default_rng(7).integers(0, 256, (28, 28), dtype=np.uint8)
    assert extract_features(img, 90, 16).shape == (3136,)
    assert feature_length(28, 28, 16) == 3136


def test_single_iteration_is_pooled_image():
    img = np.random.default_rng(8).integers(0, 256, (6, 6), dtype=np.uint8)
    assert np.array_equal(extract_features(img, 90, 1), maxpool_2x2(img).ravel())


def test_rule0_second_slice_zero():
    img = np.random.default_rng(9).integers(0, 256, (6, 6), dtype=np.uint8)
    f = extract_features(img, 0, 2)
    assert not f[9:].any()


def test_slices_follow_definition():
    img = np.random.default_rng(10).integers(0, 256, (8, 6), dtype=np.uint8)
    t = decompose_bitplanes(img)
    slices = reservoir_slices(img, 30, 5)
    for k in range(1, 5):
        expected = recompose(combine_xor(iterate_rows(t, 30, k), iterate_columns(t, 30, k)))
        assert np.array_equal(slices[k], expected)


@settings(max_examples=30, deadline=None)
@given(images, st.integers(0, 255), st.integers(1, 5))
def test_feature_invariants(img, rule, m):
    f = extract_features(img, rule, m)
    h, w = img.shape
    assert len(f) == m * ((h + 1) // 2) * ((w + 1) // 2)
    assert np.array_equal(f[: ((h + 1) // 2) * ((w + 1) // 2)], maxpool_2x2(img).ravel())
    assert np.array_equal(f, extract_features(img, rule, m))


def test_packed_route_matches_tensor_route_all_rules():
    rng = np.random.default_rng(11)
    imgs = rng.integers(0, 256, (3, 10, 12), dtype=np.uint8)
    for rule in range(256):
        batch = extract_features_batch(imgs, rule, 4, chunk=2)
        for i in range(3):
            assert np.array_equal(batch[i], extract_features(imgs[i], rule, 4)), rule


def test_packed_route_odd_shape():
    imgs = np.random.default_rng(12).integers(0, 256, (2, 7, 5), dtype=np.uint8)
    batch = extract_features_batch(imgs, 90, 3)
    assert batch.shape == (2, 3 * 4 * 3)
    assert np.array_equal(batch[1], extract_features(imgs[1], 90, 3))
