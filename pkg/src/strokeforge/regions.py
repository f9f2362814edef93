"""Region masks: the binary selections that drive per-round optimization.

Region 0 is always the global whole-image region (an all-ones mask); user
regions get positive ids. Masks align pixel-for-pixel with the photograph,
not with the render canvas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from strokeforge.errors import DomainError

GLOBAL_REGION_ID = 0


@dataclass(frozen=True, eq=False)
class RegionMask:
    """Binary H x W grid selecting part of the photograph."""

    bits: NDArray[np.bool_]
    region_id: int
    label: str = ""

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise DomainError(f"mask must be 2-D, got shape {bits.shape}")
        if not bits.any():
            raise DomainError("mask selects no pixels")
        if self.region_id < 0:
            raise DomainError(f"region_id must be >= 0, got {self.region_id}")
        if self.region_id == GLOBAL_REGION_ID and not bits.all():
            raise DomainError("region_id 0 is reserved for the all-ones global mask")
        bits = np.ascontiguousarray(bits)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape


def global_mask(height: int, width: int, label: str = "global") -> RegionMask:
    """The whole-image region optimized in the first round."""
    return RegionMask(np.ones((height, width), dtype=bool), GLOBAL_REGION_ID, label)


def polygon_is_simple(vertices: NDArray[np.float64]) -> bool:
    """True when no two non-adjacent polygon edges intersect.

    Brute-force O(n^2) segment test; region polygons are small (UI-drawn).
    """
    pts = np.asarray(vertices, dtype=np.float64)
    n = len(pts)
    if n < 3:
        return False

    def orient(a, b, c) -> float:
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_segment(a, b, p) -> bool:
        return (min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]))

    def segments_cross(a, b, c, d) -> bool:
        o1, o2 = orient(a, b, c), orient(a, b, d)
        o3, o4 = orient(c, d, a), orient(c, d, b)
        if ((o1 > 0) != (o2 > 0)) and ((o3 > 0) != (o4 > 0)):
            return True
        if o1 == 0 and on_segment(a, b, c):
            return True
        if o2 == 0 and on_segment(a, b, d):
            return True
        if o3 == 0 and on_segment(c, d, a):
            return True
        if o4 == 0 and on_segment(c, d, b):
            return True
        return False

    edges = [(pts[i], pts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            # Adjacent edges share an endpoint; skip those pairs.
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if segments_cross(*edges[i], *edges[j]):
                return False
    return True


def rasterize_polygon(vertices, width: int, height: int) -> NDArray[np.bool_]:
    """Even-odd scanline fill of a polygon given in normalized coordinates.

    A pixel (row r, col c) is set iff its center (c + 0.5, r + 0.5), in
    pixel units, has an odd crossing count against the polygon. The UI
    re-implements exactly this rule so client-side previews match the
    server's masks pixel for pixel.
    """
    pts = np.asarray(vertices, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise DomainError("polygon needs at least 3 (x, y) vertices")
    if not polygon_is_simple(pts):
        raise DomainError("polygon is self-intersecting")

    # Normalized -> pixel units of the target grid.
    px = pts * np.array([width, height], dtype=np.float64)
    xs, ys = px[:, 0], px[:, 1]
    xe, ye = np.roll(xs, -1), np.roll(ys, -1)

    mask = np.zeros((height, width), dtype=bool)
    cx = np.arange(width, dtype=np.float64) + 0.5
    for r in range(height):
        cy = r + 0.5
        # Half-open rule [min, max): edges touching the scanline at a
        # vertex are counted once.
        crosses = (ys <= cy) != (ye <= cy)
        if not crosses.any():
            continue
        x0, y0 = xs[crosses], ys[crosses]
        x1, y1 = xe[crosses], ye[crosses]
        x_at = x0 + (cy - y0) * (x1 - x0) / (y1 - y0)
        inside = (cx[None, :] < x_at[:, None]).sum(axis=0) % 2 == 1
        mask[r] = inside
    return mask


def mask_from_polygon(vertices, width: int, height: int,
                      region_id: int, label: str = "") -> RegionMask:
    bits = rasterize_polygon(vertices, width, height)
    if not bits.any():
        raise DomainError("polygon covers no pixel centers")
    return RegionMask(bits, region_id, label)
