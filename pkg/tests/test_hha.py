"""HHA encoding: channels, gradients, normals, quantization."""

import numpy as np
import pytest

from gazekit import DepthMap, HhaConfig, HhaImage, InvalidInputError, encode_hha, sobel_gradients
from gazekit.hha import (
    SOBEL_TAPS_X,
    SOBEL_TAPS_Y,
    normalize_range,
    quantize_channel,
    rescale_depth,
    surface_normals,
)


def reference_sobel(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel double loop over the same taps in the same order."""
    h, w = values.shape
    padded = np.pad(values, 1, mode="edge")
    gx = np.zeros((h, w))
    gy = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            ax = 0.0
            ay = 0.0
            for (dy, dx), weight in SOBEL_TAPS_X:
                ax += weight * padded[1 + y + dy, 1 + x + dx]
            for (dy, dx), weight in SOBEL_TAPS_Y:
                ay += weight * padded[1 + y + dy, 1 + x + dx]
            gx[y, x] = ax
            gy[y, x] = ay
    return gx, gy


class TestNormalizeRange:
    def test_endpoints(self):
        out = normalize_range(np.array([[2.0, 4.0], [6.0, 10.0]]), 1.0, 10.0)
        assert out.min() == 1.0
        assert out.max() == 10.0
        assert out[0, 1] == pytest.approx(1.0 + 2.0 / 8.0 * 9.0)

    def test_constant_grid_fill(self):
        grid = np.full((4, 4), 7.0)
        assert np.all(normalize_range(grid, 1.0, 10.0) == 1.0)
        assert np.all(normalize_range(grid, 0.0, 255.0, constant_value=0) == 0.0)
        assert np.all(normalize_range(grid, 0.0, 255.0, constant_value=128) == 128.0)

    def test_bad_bounds(self):
        with pytest.raises(InvalidInputError):
            normalize_range(np.zeros((2, 2)), 5.0, 5.0)

    def test_non_finite(self):
        with pytest.raises(InvalidInputError):
            normalize_range(np.array([[1.0, np.nan]]), 0.0, 1.0)


class TestDepthMap:
    def test_validation(self):
        with pytest.raises(InvalidInputError):
            DepthMap(np.array([1.0, 2.0]))
        with pytest.raises(InvalidInputError):
            DepthMap(np.array([[1.0, -2.0]]))
        with pytest.raises(InvalidInputError):
            DepthMap(np.array([[1.0, np.inf]]))

    def test_size(self):
        d = DepthMap(np.ones((4, 6)))
        assert d.size.width == 6
        assert d.size.height == 4


class TestHandOracle:
    """3x3 depths 1..9: every channel value derived by hand."""

    depth = DepthMap(np.arange(1.0, 10.0).reshape(3, 3))

    def test_rescaled_values(self):
        rescaled = rescale_depth(self.depth)
        expected = 1.0 + (np.arange(1.0, 10.0).reshape(3, 3) - 1.0) * 9.0 / 8.0
        np.testing.assert_allclose(rescaled.values, expected, rtol=0, atol=1e-12)

    def test_disparity_channel(self):
        img = encode_hha(self.depth)
        expected = np.array([[255, 105, 59], [36, 23, 14], [8, 4, 0]], dtype=np.uint8)
        np.testing.assert_array_equal(img.disparity, expected)

    def test_height_channel(self):
        img = encode_hha(self.depth)
        expected = np.array([[0, 0, 0], [85, 85, 85], [170, 170, 170]], dtype=np.uint8)
        np.testing.assert_array_equal(img.height, expected)

    def test_gradients(self):
        rescaled = rescale_depth(self.depth)
        gx, gy = sobel_gradients(rescaled)
        np.testing.assert_allclose(gx, np.array([[4.5, 9.0, 4.5]] * 3))
        np.testing.assert_allclose(gy, np.array([[13.5] * 3, [27.0] * 3, [13.5] * 3]))

    def test_angle_extremes(self):
        # the flattest normals sit at the corners (smallest gradients),
        # the steepest at the center, so those map to 0 and 255
        img = encode_hha(self.depth)
        assert img.angle[0, 0] == 0
        assert img.angle[1, 1] == 255
        assert img.angle[0, 0] == img.angle[2, 2]


class TestSobel:
    def test_matches_reference_bitwise(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            h = int(rng.integers(3, 20))
            w = int(rng.integers(3, 20))
            values = rng.uniform(0.1, 10.0, size=(h, w))
            gx, gy = sobel_gradients(DepthMap(values))
            rx, ry = reference_sobel(values)
            assert np.array_equal(gx, rx)
            assert np.array_equal(gy, ry)

    def test_ramp_interior(self):
        values = np.tile(np.arange(8.0), (8, 1))
        gx, gy = sobel_gradients(DepthMap(values))
        assert np.all(gx[:, 1:-1] == 8.0)
        assert np.all(gx[:, 0] == 4.0)
        assert np.all(gy == 0.0)

    def test_too_small(self):
        with pytest.raises(InvalidInputError):
            sobel_gradients(DepthMap(np.ones((2, 5))))


class TestNormalsAndAngle:
    def test_unit_length(self):
        rng = np.random.default_rng(5)
        gx = rng.normal(size=(6, 6))
        gy = rng.normal(size=(6, 6))
        n = surface_normals(gx, gy)
        np.testing.assert_allclose(np.linalg.norm(n, axis=-1), 1.0, atol=1e-12)
        assert np.all(n[..., 2] > 0)

    def test_flat_gradients_point_at_viewer(self):
        n = surface_normals(np.zeros((3, 3)), np.zeros((3, 3)))
        np.testing.assert_array_equal(n[..., 2], 1.0)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            surface_normals(np.zeros((2, 2)), np.zeros((3, 3)))


class TestQuantize:
    def test_round_half_up(self):
        out = quantize_channel(np.array([0.0, 0.4999, 0.5, 1.5, 254.5, 255.0]))
        np.testing.assert_array_equal(out, np.array([0, 0, 1, 2, 255, 255], dtype=np.uint8))


class TestEncode:
    def test_flat_map_zero_angle(self):
        img = encode_hha(DepthMap(np.full((8, 8), 3.0)))
        assert np.all(img.angle == 0)
        assert np.all(img.disparity == 0)

    def test_affine_plane_constant_interior_angle(self):
        ys, xs = np.mgrid[0:10, 0:12]
        img = encode_hha(DepthMap(1.0 + 0.3 * xs + 0.2 * ys))
        interior = img.angle[1:-1, 1:-1]
        assert np.unique(interior).size == 1

    def test_disparity_anti_monotone(self):
        rng = np.random.default_rng(3)
        values = rng.uniform(0.5, 9.0, size=(16, 16))
        img = encode_hha(DepthMap(values))
        flat_depth = values.ravel()
        flat_disp = img.disparity.ravel().astype(int)
        order = np.argsort(flat_depth)
        assert np.all(np.diff(flat_disp[order]) <= 0)

    def test_channel_ranges_and_dtype(self):
        rng = np.random.default_rng(9)
        img = encode_hha(DepthMap(rng.uniform(0.0, 20.0, size=(32, 32))))
        arr = img.to_array()
        assert arr.shape == (32, 32, 3)
        assert arr.dtype == np.uint8

    def test_too_small(self):
        with pytest.raises(InvalidInputError):
            encode_hha(DepthMap(np.ones((2, 2))))

    def test_epsilon_guards_zero_depth(self):
        values = np.zeros((4, 4))
        values[0, 0] = 5.0
        img = encode_hha(DepthMap(values))
        assert img.disparity.max() == 255

    def test_config_validation(self):
        with pytest.raises(InvalidInputError):
            HhaConfig(rescale_lo=5.0, rescale_hi=5.0)
        with pytest.raises(InvalidInputError):
            HhaConfig(epsilon=0.0)
        with pytest.raises(InvalidInputError):
            HhaConfig(constant_channel_value=300)


class TestHhaImage:
    def test_shape_checks(self):
        from gazekit import ImageSize

        good = np.zeros((2, 3), dtype=np.uint8)
        HhaImage(disparity=good, height=good, angle=good, size=ImageSize(width=3, height=2))
        with pytest.raises(InvalidInputError):
            HhaImage(disparity=good, height=good, angle=np.zeros((3, 2), dtype=np.uint8),
                     size=ImageSize(width=3, height=2))
        with pytest.raises(InvalidInputError):
            HhaImage(disparity=good.astype(np.int16), height=good, angle=good,
                     size=ImageSize(width=3, height=2))
