/**
 * Region polygons: validation and even-odd rasterization.
 *
 * The rasterizer mirrors the server's implementation operation for
 * operation (same formulas, same IEEE-754 double arithmetic), so the
 * client-side mask preview is pixel-exact with the mask the server
 * builds from the same vertices. A pixel (row r, col c) is inside iff
 * its center (c + 0.5, r + 0.5), in pixel units, sees an odd number of
 * polygon edges to its right under the half-open vertical rule.
 */

export type Vertex = [number, number];

export interface RegionDraft {
  polygon: Vertex[];
  label: string;
}

function orient(a: Vertex, b: Vertex, c: Vertex): number {
  return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
}

function onSegment(a: Vertex, b: Vertex, p: Vertex): boolean {
  return (
    Math.min(a[0], b[0]) <= p[0] && p[0] <= Math.max(a[0], b[0]) &&
    Math.min(a[1], b[1]) <= p[1] && p[1] <= Math.max(a[1], b[1])
  );
}

function segmentsCross(a: Vertex, b: Vertex, c: Vertex, d: Vertex): boolean {
  const o1 = orient(a, b, c);
  const o2 = orient(a, b, d);
  const o3 = orient(c, d, a);
  const o4 = orient(c, d, b);
  if ((o1 > 0) !== (o2 > 0) && (o3 > 0) !== (o4 > 0)) return true;
  if (o1 === 0 && onSegment(a, b, c)) return true;
  if (o2 === 0 && onSegment(a, b, d)) return true;
  if (o3 === 0 && onSegment(c, d, a)) return true;
  if (o4 === 0 && onSegment(c, d, b)) return true;
  return false;
}

/** True when no two non-adjacent edges intersect (and n >= 3). */
export function polygonIsSimple(vertices: Vertex[]): boolean {
  const n = vertices.length;
  if (n < 3) return false;
  const edges: [Vertex, Vertex][] = vertices.map((v, i) => [v, vertices[(i + 1) % n]]);
  for (let i = 0; i < n; i++) {
    for (let j = i + 1; j < n; j++) {
      if (j === i || (j + 1) % n === i || (i + 1) % n === j) continue;
      if (segmentsCross(edges[i][0], edges[i][1], edges[j][0], edges[j][1])) {
        return false;
      }
    }
  }
  return true;
}

/** Validate a draft the way the server will; returns an error or null. */
export function validateDraft(draft: RegionDraft): string | null {
  if (draft.polygon.length < 3) return "a region needs at least 3 vertices";
  if (!polygonIsSimple(draft.polygon)) return "polygon is self-intersecting";
  const area = polygonAreaFraction(draft.polygon);
  if (area <= 0) return "polygon encloses no area";
  if (area > 1) return "polygon exceeds the image frame";
  return null;
}

/** Enclosed area as a fraction of the unit frame (shoelace, absolute). */
export function polygonAreaFraction(vertices: Vertex[]): number {
  let s = 0;
  const n = vertices.length;
  for (let i = 0; i < n; i++) {
    const [x0, y0] = vertices[i];
    const [x1, y1] = vertices[(i + 1) % n];
    s += x0 * y1 - x1 * y0;
  }
  return Math.abs(s) / 2;
}

/**
 * Even-odd scanline fill at width x height; vertices are normalized.
 * Returns a row-major Uint8Array mask (1 = inside).
 */
export function rasterizePolygon(
  vertices: Vertex[],
  width: number,
  height: number,
): Uint8Array {
  if (vertices.length < 3) throw new Error("polygon needs at least 3 vertices");
  if (!polygonIsSimple(vertices)) throw new Error("polygon is self-intersecting");

  const n = vertices.length;
  const xs = new Float64Array(n);
  const ys = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    xs[i] = vertices[i][0] * width;
    ys[i] = vertices[i][1] * height;
  }

  const mask = new Uint8Array(width * height);
  const crossingXs: number[] = [];
  for (let r = 0; r < height; r++) {
    const cy = r + 0.5;
    crossingXs.length = 0;
    for (let i = 0; i < n; i++) {
      const j = (i + 1) % n;
      // Half-open rule: an edge crosses the scanline when exactly one
      // endpoint satisfies y <= cy.
      if ((ys[i] <= cy) !== (ys[j] <= cy)) {
        crossingXs.push(xs[i] + ((cy - ys[i]) * (xs[j] - xs[i])) / (ys[j] - ys[i]));
      }
    }
    if (crossingXs.length === 0) continue;
    for (let c = 0; c < width; c++) {
      const cx = c + 0.5;
      let count = 0;
      for (const xAt of crossingXs) {
        if (cx < xAt) count++;
      }
      if (count % 2 === 1) mask[r * width + c] = 1;
    }
  }
  return mask;
}
