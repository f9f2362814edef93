"""Deterministic SVG export of sketches, and the inverse parser.

Each stroke becomes one black cubic path inside a per-round layer group.
Path coordinates are written in canvas pixel units for viewers; the
machine-readable <metadata> block carries the exact normalized control
points (shortest round-trip float representation), which is what the
parser reads back. That makes export -> parse -> export byte-identical
and control-point recovery lossless instead of merely within tolerance.
"""

from __future__ import annotations

import json
from xml.etree import ElementTree as ET
from xml.sax.saxutils import escape

from strokeforge.errors import DomainError
from strokeforge.geometry import Canvas, Sketch, Stroke

_SVG_NS = "http://www.w3.org/2000/svg"


def export_svg(sketch: Sketch, meta: dict | None = None) -> str:
    """Serialize a sketch to SVG text with a lossless metadata block."""
    canvas = sketch.canvas
    w, h = canvas.width, canvas.height
    payload = {
        "canvas": [w, h],
        "rounds_completed": sketch.rounds_completed,
        "strokes": [
            {
                "round": s.round_id,
                "width": s.width,
                "points": [[float(x), float(y)] for x, y in s.control_points],
            }
            for s in sketch.strokes
        ],
        "extra": dict(sorted((meta or {}).items())),
    }

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="{_SVG_NS}" viewBox="0 0 {w} {h}" width="{w}" height="{h}">',
        f'<metadata id="strokeforge">{escape(json.dumps(payload, sort_keys=False))}</metadata>',
    ]

    by_round: dict[int, list[Stroke]] = {}
    for s in sketch.strokes:
        by_round.setdefault(s.round_id, []).append(s)
    for round_id in sorted(by_round):
        lines.append(f'<g id="round-{round_id}">')
        for s in by_round[round_id]:
            px = s.control_points * canvas.scale()
            coords = " ".join(f"{v:.4f}" for v in px.reshape(-1))
            width_px = s.width * canvas.min_side
            first_x, first_y, rest = coords.split(" ", 2)
            lines.append(
                f'<path d="M {first_x} {first_y} C {rest}" fill="none" stroke="#000" '
                f'stroke-width="{width_px:.4f}" stroke-linecap="round"/>')
        lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def parse_svg(text: str | bytes) -> tuple[Sketch, dict]:
    """Rebuild (sketch, extra-metadata) from SVG produced by export_svg."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise DomainError(f"not parseable as SVG: {exc}") from exc

    node = root.find(f"{{{_SVG_NS}}}metadata")
    if node is None or not node.text:
        raise DomainError("SVG lacks the strokeforge metadata block")
    # ElementTree already resolved the XML entities written by escape().
    payload = json.loads(node.text)

    w, h = payload["canvas"]
    strokes = tuple(
        Stroke(entry["points"], width=entry["width"], round_id=entry["round"])
        for entry in payload["strokes"]
    )
    sketch = Sketch(canvas=Canvas(w, h), strokes=strokes,
                    rounds_completed=payload["rounds_completed"])

    n_paths = len(root.findall(f".//{{{_SVG_NS}}}path"))
    if n_paths != len(strokes):
        raise DomainError(f"metadata lists {len(strokes)} strokes but SVG has {n_paths} paths")
    return sketch, payload.get("extra", {})
