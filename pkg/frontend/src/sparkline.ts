/** Pure geometry for the loss sparkline; rendering stays in app.ts. */

export interface SparkPoint {
  x: number;
  y: number;
}

/**
 * Map a loss series onto a w x h box, first value at x=0, last at x=w.
 * Every input value maps to exactly one point, in order: the sparkline
 * is the stream, not a resampling of it.
 */
export function sparklinePoints(values: number[], w: number, h: number): SparkPoint[] {
  if (values.length === 0) return [];
  if (values.length === 1) return [{ x: 0, y: h / 2 }];
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (hi === lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const dx = w / (values.length - 1);
  return values.map((v, i) => ({
    x: i * dx,
    y: h - ((v - lo) / (hi - lo)) * h,
  }));
}
