import math

import numpy as np
import pytest

from cvloc.core.exceptions import GeometryError, ShapeError
from cvloc.tensor.feature_map import CoordGrid, FeatureMap
from cvloc.tensor.ops import avg_pool2x2, bilinear_gather, bilinear_sample, concat_channels, conv2d, pool2x2, relu


def naive_conv(x, k, stride, padding, bias):
    h, w, cin = x.shape
    ks, _, _, cout = k.shape
    xp = np.zeros((h + 2 * padding, w + 2 * padding, cin))
    xp[padding:padding + h, padding:padding + w] = x
    oh = (h + 2 * padding - ks) // stride + 1
    ow = (w + 2 * padding - ks) // stride + 1
    out = np.zeros((oh, ow, cout))
    for i in range(oh):
        for j in range(ow):
            for o in range(cout):
                acc = 0.0
                for a in range(ks):
                    for b in range(ks):
                        for c in range(cin):
                            acc += xp[i * stride + a, j * stride + b, c] * k[a, b, c, o]
                out[i, j, o] = acc + (bias[o] if bias is not None else 0.0)
    return out


def naive_bilinear(img, x, y):
    h, w = img.shape[:2]
    if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
        return np.zeros(img.shape[2:]), 0
    x0 = min(int(math.floor(x)), max(w - 2, 0))
    y0 = min(int(math.floor(y)), max(h - 2, 0))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    ax, ay = x - x0, y - y0
    v = (1 - ax) * (1 - ay) * img[y0, x0] + ax * (1 - ay) * img[y0, x1] + (1 - ax) * ay * img[y1, x0] + ax * ay * img[y1, x1]
    return v, 1


def test_conv2d_matches_loop_oracle():
    rng = np.random.default_rng(0)
    for case in range(20):
        h, w = rng.integers(3, 9, size=2)
        cin, cout = rng.integers(1, 4, size=2)
        k = int(rng.choice([1, 3, 5]))
        stride = int(rng.integers(1, 3))
        padding = int(rng.integers(0, k // 2 + 1))
        if (h + 2 * padding - k) < 0 or (w + 2 * padding - k) < 0:
            continue
        x = rng.normal(size=(h, w, cin))
        kernel = rng.normal(size=(k, k, cin, cout))
        bias = rng.normal(size=cout) if case % 2 else None
        got = conv2d(FeatureMap(x), kernel, stride, padding, bias).data
        np.testing.assert_allclose(got, naive_conv(x, kernel, stride, padding, bias), atol=1e-10)


def test_conv2d_is_repeatable_bitwise():
    rng = np.random.default_rng(1)
    fm = FeatureMap(rng.normal(size=(7, 6, 3)))
    k = rng.normal(size=(3, 3, 3, 4))
    assert np.array_equal(conv2d(fm, k, padding=1).data, conv2d(fm, k, padding=1).data)


def test_conv2d_is_linear_without_bias():
    rng = np.random.default_rng(12)
    k = rng.normal(size=(3, 3, 4, 2))
    x, y = rng.normal(size=(2, 9, 7, 4))
    a, b = 1.7, -0.4
    for stride, padding in ((1, 1), (2, 0)):
        lhs = conv2d(FeatureMap(a * x + b * y), k, stride, padding).data
        rhs = a * conv2d(FeatureMap(x), k, stride, padding).data + b * conv2d(FeatureMap(y), k, stride, padding).data
        np.testing.assert_allclose(lhs, rhs, rtol=1e-6, atol=1e-12)


def test_conv2d_rejects_bad_shapes():
    fm = FeatureMap(np.zeros((4, 4, 2)))
    with pytest.raises(ShapeError):
        conv2d(fm, np.zeros((3, 3, 3, 1)))
    with pytest.raises(GeometryError):
        conv2d(fm, np.zeros((7, 7, 2, 1)), padding=0)
    with pytest.raises(ShapeError):
        conv2d(fm, np.zeros((3, 3, 2, 1)), bias=np.zeros(2))


def test_feature_map_rejects_non_finite_and_empty():
    with pytest.raises(ShapeError):
        FeatureMap(np.full((2, 2, 1), np.nan))
    with pytest.raises(ShapeError):
        FeatureMap(np.zeros((0, 2, 1)))
    with pytest.raises(ShapeError):
        FeatureMap(np.zeros((2, 2)))


def test_avg_pool_matches_block_oracle_even_and_odd():
    rng = np.random.default_rng(2)
    for h, w in [(4, 6), (5, 7), (1, 1), (3, 2)]:
        x = rng.normal(size=(h, w, 2))
        got = avg_pool2x2(FeatureMap(x)).data
        oh, ow = (h + 1) // 2, (w + 1) // 2
        assert got.shape == (oh, ow, 2)
        for i in range(oh):
            for j in range(ow):
                block = [x[min(2 * i + a, h - 1), min(2 * j + b, w - 1)] for a in (0, 1) for b in (0, 1)]
                np.testing.assert_allclose(got[i, j], np.mean(block, axis=0), atol=1e-12)


def test_pool2x2_on_trailing_axes():
    rng = np.random.default_rng(3)
    vol = rng.normal(size=(2, 3, 4, 6))
    pooled = pool2x2(vol, axes=(2, 3))
    assert pooled.shape == (2, 3, 2, 3)
    np.testing.assert_allclose(pooled[1, 2, 0, 0], vol[1, 2, 0:2, 0:2].mean(), atol=1e-12)


def test_bilinear_sample_is_exact_on_the_lattice():
    rng = np.random.default_rng(4)
    fm = FeatureMap(rng.normal(size=(5, 6, 3)))
    out, valid = bilinear_sample(fm, CoordGrid.lattice(5, 6))
    assert np.array_equal(out.data, fm.data)
    assert valid.all()


def test_bilinear_sample_matches_oracle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        h, w = rng.integers(2, 8, size=2)
        img = rng.normal(size=(h, w, 2))
        x = rng.uniform(-1.0, w, size=(3, 4))
        y = rng.uniform(-1.0, h, size=(3, 4))
        out, valid = bilinear_sample(FeatureMap(img), CoordGrid.from_xy(x, y))
        for i in range(3):
            for j in range(4):
                v, ok = naive_bilinear(img, x[i, j], y[i, j])
                assert valid[i, j] == ok
                np.testing.assert_allclose(out.data[i, j], v, atol=1e-12)


def test_bilinear_sample_out_of_bounds_is_zero_and_invalid():
    fm = FeatureMap(np.ones((3, 3, 1)))
    out, valid = bilinear_sample(fm, CoordGrid.from_xy(np.array([[-0.1, 2.1, np.nan]]), np.array([[1.0, 1.0, 1.0]])))
    assert valid.tolist() == [[0, 0, 0]]
    assert np.all(out.data == 0.0)


def test_bilinear_gather_per_image():
    rng = np.random.default_rng(6)
    images = rng.normal(size=(3, 4, 5))
    x = rng.uniform(0, 4, size=(3, 2))
    y = rng.uniform(0, 3, size=(3, 2))
    vals, valid = bilinear_gather(images, x, y)
    assert valid.all()
    for n in range(3):
        for d in range(2):
            v, _ = naive_bilinear(images[n][..., None], x[n, d], y[n, d])
            assert vals[n, d] == pytest.approx(v[0], abs=1e-12)


def test_relu_and_concat():
    a = FeatureMap(np.array([[[-1.0, 2.0]]]))
    assert relu(a).data.tolist() == [[[0.0, 2.0]]]
    b = FeatureMap(np.array([[[3.0]]]))
    assert concat_channels(a, None, b).data.tolist() == [[[-1.0, 2.0, 3.0]]]
    with pytest.raises(ShapeError):
        concat_channels(a, FeatureMap(np.zeros((2, 1, 1))))
