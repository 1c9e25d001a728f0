import math

import numpy as np
import pytest

from cvloc.core.exceptions import ShapeError
from cvloc.flow.correlation import build_correlation, build_pyramid, lookup, lookup_channels
from cvloc.tensor.feature_map import CoordGrid, FeatureMap
from cvloc.tensor.ops import pool2x2


def maps(seed, h1=3, w1=4, h2=6, w2=5, c=3):
    rng = np.random.default_rng(seed)
    return FeatureMap(rng.normal(size=(h1, w1, c))), FeatureMap(rng.normal(size=(h2, w2, c)))


def test_volume_matches_dot_products():
    f1, f2 = maps(0)
    vol = build_correlation(f1, f2).levels[0]
    assert vol.shape == (3, 4, 6, 5)
    for i in range(3):
        for j in range(4):
            for k in range(6):
                for l in range(5):
                    expected = float(np.dot(f1.data[i, j], f2.data[k, l])) / math.sqrt(3)
                    assert vol[i, j, k, l] == pytest.approx(expected, abs=1e-12)


def test_swapping_arguments_transposes_exactly():
    f1, f2 = maps(1)
    a = build_correlation(f1, f2).levels[0]
    b = build_correlation(f2, f1).levels[0]
    assert np.array_equal(a, b.transpose(2, 3, 0, 1))


def test_channel_mismatch():
    with pytest.raises(ShapeError):
        build_correlation(FeatureMap(np.zeros((2, 2, 3))), FeatureMap(np.zeros((2, 2, 2))))


def test_pyramid_levels_are_pooled_target_axes():
    f1, f2 = maps(2, h2=7, w2=9)
    pyr = build_pyramid(build_correlation(f1, f2), num_levels=4)
    assert pyr.num_levels == 4
    assert [lvl.shape[2:] for lvl in pyr.levels] == [(7, 9), (4, 5), (2, 3), (1, 2)]
    for k in range(1, 4):
        assert np.array_equal(pyr.levels[k], pool2x2(pyr.levels[k - 1], axes=(2, 3)))
    with pytest.raises(ShapeError):
        build_pyramid(build_correlation(f1, f2), num_levels=0)


def naive_sample(img, x, y):
    h, w = img.shape
    if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
        return 0.0
    x0 = min(int(math.floor(x)), max(w - 2, 0))
    y0 = min(int(math.floor(y)), max(h - 2, 0))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    ax, ay = x - x0, y - y0
    return (1 - ax) * (1 - ay) * img[y0, x0] + ax * (1 - ay) * img[y0, x1] + (1 - ax) * ay * img[y1, x0] + ax * ay * img[y1, x1]


def test_lookup_matches_naive_window_sampling():
    f1, f2 = maps(3, h1=2, w1=3, h2=8, w2=8)
    pyr = build_pyramid(build_correlation(f1, f2), num_levels=2)
    rng = np.random.default_rng(4)
    coords = CoordGrid.from_xy(rng.uniform(-1, 8, size=(2, 3)), rng.uniform(-1, 8, size=(2, 3)))
    r = 1
    out = lookup(pyr, coords, radius=r)
    assert out.channels == lookup_channels(2, r) == 18
    for i in range(2):
        for j in range(3):
            ch = 0
            for k in range(2):
                s = 2.0 ** k
                for dy in range(-r, r + 1):
                    for dx in range(-r, r + 1):
                        img = pyr.levels[k][i, j]
                        expected = naive_sample(img, coords.x[i, j] / s + dx, coords.y[i, j] / s + dy)
                        assert out.data[i, j, ch] == pytest.approx(expected, abs=1e-12)
                        ch += 1


def test_lookup_checks_shape_and_radius():
    f1, f2 = maps(5)
    pyr = build_correlation(f1, f2)
    with pytest.raises(ShapeError):
        lookup(pyr, CoordGrid.lattice(2, 2), radius=1)
    with pytest.raises(ShapeError):
        lookup(pyr, CoordGrid.lattice(3, 4), radius=-1)


def test_lookup_channel_count():
    assert lookup_channels(4, 4) == 324
    assert lookup_channels(1, 0) == 1


def test_volume_obeys_cauchy_schwarz():
    f1, f2 = maps(6, h1=5, w1=5, h2=7, w2=6, c=8)
    vol = build_correlation(f1, f2).levels[0]
    bound = np.linalg.norm(f1.data, axis=-1)[:, :, None, None] * np.linalg.norm(f2.data, axis=-1)[None, None] / math.sqrt(8)
    assert np.all(np.abs(vol) <= bound + 1e-12)
    # equality for a feature matched with itself
    self_vol = build_correlation(f1, f1).levels[0]
    diag = np.einsum("ijij->ij", self_vol)
    np.testing.assert_allclose(diag, np.sum(f1.data**2, axis=-1) / math.sqrt(8), rtol=1e-12)


def test_pyramid_preserves_the_global_mean_on_even_grids():
    f1, f2 = maps(7, h1=3, w1=3, h2=16, w2=8, c=4)
    pyr = build_pyramid(build_correlation(f1, f2), num_levels=4)
    means = [lvl.mean() for lvl in pyr.levels]
    for k in range(1, 4):
        assert means[k] == pytest.approx(means[0], rel=1e-12, abs=1e-12)
    # per source cell too, since pooling only touches the target axes
    np.testing.assert_allclose(pyr.levels[3].mean(axis=(2, 3)), pyr.levels[0].mean(axis=(2, 3)), atol=1e-12)
