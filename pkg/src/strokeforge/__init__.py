"""strokeforge — photo to vector sketch via multi-round Bezier stroke optimization."""

from strokeforge.geometry import Canvas, Sketch, Stroke, bezier_point, flatten
from strokeforge.regions import RegionMask, global_mask

__version__ = "0.1.0"

__all__ = [
    "Canvas",
    "Sketch",
    "Stroke",
    "RegionMask",
    "bezier_point",
    "flatten",
    "global_mask",
    "__version__",
]
