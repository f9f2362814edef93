"""Canonical stroke/sketch types and cubic Bezier evaluation.

Coordinate conventions used everywhere in this package:

* Stroke control points live in normalized units, nominally [0, 1]^2 with a
  top-left origin (x right, y down). They may drift outside that square
  during optimization.
* A Canvas maps normalized to pixel coordinates as x_px = x_norm * width,
  y_px = y_norm * height.
* Stroke width is a fraction of min(canvas width, height); strokes are
  always black at full opacity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from strokeforge.errors import DomainError

# Width is never optimized; only control points are trainable.
DEFAULT_STROKE_WIDTH = 0.006


@dataclass(frozen=True)
class Canvas:
    """Raster target dimensions for rendering a sketch."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 8 or self.height < 8:
            raise DomainError(f"canvas must be at least 8x8, got {self.width}x{self.height}")

    @property
    def shape(self) -> tuple[int, int]:
        """(height, width), the numpy array shape of a render."""
        return (self.height, self.width)

    @property
    def min_side(self) -> int:
        return min(self.width, self.height)

    def scale(self) -> NDArray[np.float64]:
        """Per-axis normalized->pixel factors, ordered (x, y)."""
        return np.array([self.width, self.height], dtype=np.float64)


def _as_control_points(points) -> NDArray[np.float64]:
    cps = np.asarray(points, dtype=np.float64)
    if cps.shape != (4, 2):
        raise DomainError(f"a stroke needs exactly 4 control points, got shape {cps.shape}")
    if not np.all(np.isfinite(cps)):
        raise DomainError("control points must be finite")
    cps = np.ascontiguousarray(cps)
    cps.setflags(write=False)
    return cps


@dataclass(frozen=True, eq=False)
class Stroke:
    """One black cubic Bezier curve with fixed width."""

    control_points: NDArray[np.float64]
    width: float = DEFAULT_STROKE_WIDTH
    round_id: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "control_points", _as_control_points(self.control_points))
        if self.width <= 0:
            raise DomainError(f"stroke width must be positive, got {self.width}")
        if self.round_id < 0:
            raise DomainError(f"round_id must be >= 0, got {self.round_id}")

    def translated(self, delta) -> "Stroke":
        return Stroke(self.control_points + np.asarray(delta, dtype=np.float64),
                      width=self.width, round_id=self.round_id)


@dataclass(frozen=True)
class Sketch:
    """Ordered stroke list plus the canvas it is optimized against.

    Strokes are grouped by originating round: round_ids are non-decreasing
    along the list and never reach beyond the rounds attempted so far.
    """

    canvas: Canvas
    strokes: tuple[Stroke, ...] = field(default_factory=tuple)
    rounds_completed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "strokes", tuple(self.strokes))
        rounds = [s.round_id for s in self.strokes]
        if any(b < a for a, b in zip(rounds, rounds[1:])):
            raise DomainError("strokes must be grouped by non-decreasing round_id")
        if self.rounds_completed < 0:
            raise DomainError("rounds_completed must be >= 0")

    def __len__(self) -> int:
        return len(self.strokes)

    def with_strokes(self, new_strokes, rounds_completed: int | None = None) -> "Sketch":
        rc = self.rounds_completed if rounds_completed is None else rounds_completed
        return Sketch(canvas=self.canvas, strokes=tuple(new_strokes), rounds_completed=rc)

    def control_points_px(self) -> NDArray[np.float64]:
        """All control points in pixel units, shape (n_strokes, 4, 2).

        Pixel units are the optimizer's parameter space: a unit Adam step
        then moves a control point by about one pixel.
        """
        if not self.strokes:
            return np.zeros((0, 4, 2))
        cps = np.stack([s.control_points for s in self.strokes])
        return cps * self.canvas.scale()

    def replace_control_points_px(self, cps_px: NDArray[np.float64]) -> "Sketch":
        """Rebuild the sketch from pixel-unit control points (shape (n, 4, 2))."""
        if cps_px.shape != (len(self.strokes), 4, 2):
            raise DomainError(f"expected control point array of shape ({len(self.strokes)}, 4, 2)")
        cps_norm = cps_px / self.canvas.scale()
        strokes = tuple(
            Stroke(cp, width=s.width, round_id=s.round_id)
            for cp, s in zip(cps_norm, self.strokes)
        )
        return self.with_strokes(strokes)


def bernstein_weights(ts: NDArray[np.float64]) -> NDArray[np.float64]:
    """Cubic Bernstein basis evaluated at ts, shape (len(ts), 4)."""
    t = np.asarray(ts, dtype=np.float64)
    u = 1.0 - t
    return np.stack([u ** 3, 3.0 * u ** 2 * t, 3.0 * u * t ** 2, t ** 3], axis=-1)


def bezier_point(stroke: Stroke, t: float) -> NDArray[np.float64]:
    """Evaluate the curve at parameter t in [0, 1], in normalized units."""
    if not (0.0 <= t <= 1.0):
        raise DomainError(f"t must be in [0, 1], got {t}")
    return bernstein_weights(np.float64(t)) @ stroke.control_points


def flatten(stroke: Stroke, segments: int) -> NDArray[np.float64]:
    """Sample the curve at uniform t into a polyline of segments+1 points."""
    if segments < 1:
        raise DomainError(f"segments must be >= 1, got {segments}")
    ts = np.linspace(0.0, 1.0, segments + 1)
    return bernstein_weights(ts) @ stroke.control_points
