import numpy as np
import pytest

from strokeforge.errors import DomainError
from strokeforge.regions import (RegionMask, global_mask, mask_from_polygon,
                                 polygon_is_simple, rasterize_polygon)


class TestRegionMask:
    def test_empty_mask_rejected(self):
        with pytest.raises(DomainError):
            RegionMask(np.zeros((8, 8), dtype=bool), region_id=1)

    def test_region_zero_must_be_all_ones(self):
        bits = np.ones((8, 8), dtype=bool)
        bits[0, 0] = False
        with pytest.raises(DomainError):
            RegionMask(bits, region_id=0)

    def test_global_mask(self):
        m = global_mask(16, 24)
        assert m.region_id == 0
        assert m.shape == (16, 24)
        assert m.bits.all()


class TestPolygonSimple:
    def test_triangle_is_simple(self):
        assert polygon_is_simple(np.array([[0, 0], [1, 0], [0.5, 1]]))

    def test_bowtie_is_not(self):
        assert not polygon_is_simple(np.array([[0, 0], [1, 1], [1, 0], [0, 1]]))

    def test_two_vertices_rejected(self):
        assert not polygon_is_simple(np.array([[0, 0], [1, 1]]))


class TestRasterizePolygon:
    def test_square_on_exact_pixel_bounds(self):
        # [8, 24) x [8, 24) on a 32x32 grid covers exactly 16x16 centers.
        poly = np.array([[8, 8], [24, 8], [24, 24], [8, 24]]) / 32.0
        mask = rasterize_polygon(poly, 32, 32)
        assert mask.sum() == 256
        ys, xs = np.nonzero(mask)
        assert ys.min() == 8 and ys.max() == 23
        assert xs.min() == 8 and xs.max() == 23

    def test_full_frame_polygon_is_all_ones(self):
        poly = [[0, 0], [1, 0], [1, 1], [0, 1]]
        assert rasterize_polygon(poly, 16, 16).all()

    def test_two_vertex_polygon_rejected(self):
        with pytest.raises(DomainError):
            rasterize_polygon([[0, 0], [1, 1]], 16, 16)

    def test_self_intersecting_rejected(self):
        with pytest.raises(DomainError):
            rasterize_polygon([[0, 0], [1, 1], [1, 0], [0, 1]], 16, 16)

    def test_triangle_area_close_to_analytic(self):
        poly = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
        mask = rasterize_polygon(poly, 256, 256)
        assert abs(mask.mean() - 0.5) < 0.01

    def test_mask_from_polygon_assigns_id(self):
        m = mask_from_polygon([[0.2, 0.2], [0.8, 0.2], [0.5, 0.8]], 32, 32,
                              region_id=3, label="fg")
        assert m.region_id == 3 and m.label == "fg"
        assert m.bits.any()
