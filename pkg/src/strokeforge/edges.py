"""Canny edge detection over masked photo regions.

Pipeline: grayscale -> 5x5 Gaussian blur (sigma 1.4) -> 3x3 Sobel ->
non-maximum suppression -> double threshold -> hysteresis. Thresholds are
expressed on the 0-255 gradient magnitude scale, so the defaults (20, 200)
behave like the usual 8-bit convention regardless of the [0, 1] pixel
representation used internally.

Masking zeroes gradient magnitudes outside the region before suppression,
which keeps phantom responses at mask borders from leaking into the edge
set; mask-boundary pixels themselves are excluded from the output.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from strokeforge.errors import ConfigError, DomainError
from strokeforge.regions import RegionMask

DEFAULT_LOW_THRESHOLD = 20.0
DEFAULT_HIGH_THRESHOLD = 200.0

_GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])

_SOBEL_X = np.array([[-1, 0, 1],
                     [-2, 0, 2],
                     [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-channel image with values in [0, 1]."""

    pixels: NDArray[np.float64]
    provenance: str = ""

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.size == 0:
            raise DomainError(f"gray image must be a non-empty 2-D array, got shape {px.shape}")
        if px.min() < 0.0 or px.max() > 1.0:
            raise DomainError("gray values must lie in [0, 1]")
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class EdgePointSet:
    """Edge pixels of one region, as (x_px, y_px) pairs in row-major order."""

    points: tuple[tuple[int, int], ...]
    region_id: int

    def as_array(self) -> NDArray[np.int64]:
        if not self.points:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(self.points, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.points)


def to_grayscale(image, provenance: str = "") -> GrayImage:
    """Luminance conversion 0.299 R + 0.587 G + 0.114 B, clamped to [0, 1].

    Accepts float arrays in [0, 1] or uint8 arrays (rescaled by 255).
    """
    arr = np.asarray(image)
    if arr.size == 0:
        raise DomainError("empty image")
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    else:
        arr = arr.astype(np.float64)
    if arr.ndim == 2:
        gray = arr
    elif arr.ndim == 3 and arr.shape[2] in (3, 4):
        gray = arr[:, :, :3] @ _GRAY_WEIGHTS
    else:
        raise DomainError(f"expected HxW or HxWx3 image, got shape {arr.shape}")
    return GrayImage(np.clip(gray, 0.0, 1.0), provenance=provenance)


def gaussian_kernel_5x5(sigma: float = 1.4) -> NDArray[np.float64]:
    ax = np.arange(-2, 3, dtype=np.float64)
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _non_maximum_suppression(mag: NDArray[np.float64],
                             gx: NDArray[np.float64],
                             gy: NDArray[np.float64]) -> NDArray[np.float64]:
    """Thin ridges to one pixel along the quantized gradient direction.

    A pixel survives when its magnitude is >= the neighbor behind it and
    strictly > the neighbor ahead of it, so a perfectly symmetric ridge
    keeps exactly one of the two tied pixels.
    """
    h, w = mag.shape
    out = np.zeros_like(mag)
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0

    # Neighbor offsets (dy, dx) ahead of the pixel for each direction bin.
    ahead = np.empty((h, w, 2), dtype=np.int8)
    bin0 = (angle < 22.5) | (angle >= 157.5)   # horizontal gradient
    bin1 = (angle >= 22.5) & (angle < 67.5)    # diagonal /
    bin2 = (angle >= 67.5) & (angle < 112.5)   # vertical gradient
    bin3 = (angle >= 112.5) & (angle < 157.5)  # diagonal \
    ahead[bin0] = (0, 1)
    ahead[bin1] = (1, 1)
    ahead[bin2] = (1, 0)
    ahead[bin3] = (1, -1)

    ys, xs = np.nonzero(mag[1:-1, 1:-1] > 0)
    ys += 1
    xs += 1
    dy = ahead[ys, xs, 0].astype(np.int64)
    dx = ahead[ys, xs, 1].astype(np.int64)
    m = mag[ys, xs]
    keep = (m > mag[ys + dy, xs + dx]) & (m >= mag[ys - dy, xs - dx])
    out[ys[keep], xs[keep]] = m[keep]
    return out


def _hysteresis(suppressed: NDArray[np.float64], low: float, high: float) -> NDArray[np.bool_]:
    strong = suppressed >= high
    weak = (suppressed >= low) & ~strong
    edges = strong.copy()
    h, w = suppressed.shape
    queue = deque(zip(*np.nonzero(strong)))
    while queue:
        y, x = queue.popleft()
        y0, y1 = max(y - 1, 0), min(y + 2, h)
        x0, x1 = max(x - 1, 0), min(x + 2, w)
        for ny in range(y0, y1):
            for nx in range(x0, x1):
                if weak[ny, nx] and not edges[ny, nx]:
                    edges[ny, nx] = True
                    queue.append((ny, nx))
    return edges


def detect_edges(image: GrayImage, mask: RegionMask,
                 low: float = DEFAULT_LOW_THRESHOLD,
                 high: float = DEFAULT_HIGH_THRESHOLD) -> EdgePointSet:
    """Run the full Canny pipeline restricted to the masked region."""
    if low >= high:
        raise ConfigError(f"low threshold must be below high, got ({low}, {high})")
    if mask.shape != image.shape:
        raise DomainError(f"mask shape {mask.shape} does not match image shape {image.shape}")

    scaled = image.pixels * 255.0
    blurred = ndimage.correlate(scaled, gaussian_kernel_5x5(), mode="reflect")
    gx = ndimage.correlate(blurred, _SOBEL_X, mode="reflect")
    gy = ndimage.correlate(blurred, _SOBEL_Y, mode="reflect")
    mag = np.hypot(gx, gy)

    # Restrict before suppression so outside content cannot seed ridges.
    mag = np.where(mask.bits, mag, 0.0)
    suppressed = _non_maximum_suppression(mag, gx, gy)
    edges = _hysteresis(suppressed, low, high)

    interior = mask.bits & ~_mask_boundary(mask.bits)
    edges &= interior

    ys, xs = np.nonzero(edges)  # row-major scan order
    points = tuple((int(x), int(y)) for y, x in zip(ys, xs))
    return EdgePointSet(points=points, region_id=mask.region_id)


def _mask_boundary(bits: NDArray[np.bool_]) -> NDArray[np.bool_]:
    """Set bits with at least one unset 8-neighbor (image borders excluded)."""
    if bits.all():
        return np.zeros_like(bits)
    eroded = ndimage.binary_erosion(bits, structure=np.ones((3, 3), dtype=bool),
                                    border_value=1)
    return bits & ~eroded


def edge_count(edges: EdgePointSet) -> int:
    return len(edges)
