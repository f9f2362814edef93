import numpy as np
import pytest
from scipy import ndimage

from strokeforge.edges import (GrayImage, detect_edges, edge_count,
                               gaussian_kernel_5x5, to_grayscale)
from strokeforge.errors import ConfigError, DomainError
from strokeforge.regions import RegionMask, global_mask


class TestToGrayscale:
    def test_pure_white(self):
        rgb = np.ones((4, 4, 3))
        np.testing.assert_allclose(to_grayscale(rgb).pixels, 1.0, atol=1e-12)

    def test_pure_red_weighted_sum(self):
        rgb = np.zeros((4, 4, 3))
        rgb[..., 0] = 1.0
        np.testing.assert_allclose(to_grayscale(rgb).pixels, 0.299, atol=1e-6)

    def test_gray_as_rgb_unchanged(self):
        v = np.random.default_rng(0).uniform(0, 1, (6, 6))
        rgb = np.stack([v, v, v], axis=2)
        np.testing.assert_allclose(to_grayscale(rgb).pixels, v, atol=1e-12)

    def test_empty_image_rejected(self):
        with pytest.raises(DomainError):
            to_grayscale(np.zeros((0, 3, 3)))

    def test_uint8_input(self):
        rgb = np.full((4, 4, 3), 255, dtype=np.uint8)
        np.testing.assert_allclose(to_grayscale(rgb).pixels, 1.0, atol=1e-12)


class TestDetectEdges:
    def test_uniform_image_has_no_edges(self):
        img = GrayImage(np.full((64, 64), 0.5))
        assert len(detect_edges(img, global_mask(64, 64))) == 0

    def test_step_edge_band_and_reference(self, step_edge_image):
        """The vertical step must land in the 3-column band around the
        discontinuity, one point per row away from the borders, and agree
        with OpenCV's Canny on the identically blurred input."""
        result = detect_edges(step_edge_image, global_mask(64, 64), 20, 200)
        pts = result.as_array()
        assert len(pts) > 0
        assert set(pts[:, 0]).issubset({31, 32, 33})

        rows = pts[:, 1]
        interior = [r for r in rows if 0 < r < 63]
        assert len(interior) == len(set(interior))  # one point per row
        assert set(interior) == set(range(1, 63))

        cv2 = pytest.importorskip("cv2")
        blurred = ndimage.correlate(step_edge_image.pixels * 255.0,
                                    gaussian_kernel_5x5(), mode="reflect")
        ref = cv2.Canny(np.clip(blurred, 0, 255).astype(np.uint8), 20, 200,
                        L2gradient=True)
        ref_cols = set(np.nonzero(ref)[1].tolist())
        assert set(pts[:, 0]) == ref_cols

    def test_mask_restriction_removes_bottom_half(self, step_edge_image):
        bits = np.zeros((64, 64), dtype=bool)
        bits[:32, :] = True
        masked = detect_edges(step_edge_image, RegionMask(bits, 1), 20, 200)
        assert len(masked) > 0
        assert all(y < 32 for _, y in masked.points)

    def test_mask_containment(self, step_edge_image):
        rng = np.random.default_rng(5)
        bits = rng.uniform(size=(64, 64)) > 0.3
        bits[20:40, 20:40] = True
        mask = RegionMask(bits, 2)
        result = detect_edges(step_edge_image, mask)
        for x, y in result.points:
            assert mask.bits[y, x]

    def test_hysteresis_monotonic_in_low_threshold(self):
        rng = np.random.default_rng(11)
        img = GrayImage(ndimage.gaussian_filter(rng.uniform(0, 1, (48, 48)), 1.0))
        mask = global_mask(48, 48)
        prev = None
        for low in (10.0, 40.0, 80.0):
            pts = set(detect_edges(img, mask, low, 150.0).points)
            if prev is not None:
                assert pts.issubset(prev)
            prev = pts

    def test_deterministic_row_major_order(self, step_edge_image):
        a = detect_edges(step_edge_image, global_mask(64, 64))
        b = detect_edges(step_edge_image, global_mask(64, 64))
        assert a.points == b.points
        order = [(y, x) for x, y in a.points]
        assert order == sorted(order)

    def test_threshold_validation(self, step_edge_image):
        with pytest.raises(ConfigError):
            detect_edges(step_edge_image, global_mask(64, 64), 200, 20)

    def test_shape_mismatch_rejected(self, step_edge_image):
        with pytest.raises(DomainError):
            detect_edges(step_edge_image, global_mask(32, 32))


class TestEdgeCount:
    def test_empty(self):
        from strokeforge.edges import EdgePointSet
        assert edge_count(EdgePointSet(points=(), region_id=0)) == 0

    def test_synthetic_points(self):
        from strokeforge.edges import EdgePointSet
        pts = tuple((i, 2 * i) for i in range(17))
        assert edge_count(EdgePointSet(points=pts, region_id=1)) == 17

    def test_matches_reference_on_step_fixture(self, step_edge_image):
        result = detect_edges(step_edge_image, global_mask(64, 64), 20, 200)
        assert edge_count(result) == len(result.points) == 62
