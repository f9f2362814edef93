import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import {
  polygonAreaFraction,
  polygonIsSimple,
  rasterizePolygon,
  validateDraft,
  type Vertex,
} from "../src/polygon.js";

interface ParityCase {
  name: string;
  polygon: Vertex[];
  width: number;
  height: number;
  set_indices: number[];
}

const fixtures: ParityCase[] = JSON.parse(
  readFileSync(
    join(dirname(fileURLToPath(import.meta.url)), "fixtures", "polygon_parity.json"),
    "utf-8",
  ),
);

describe("rasterizePolygon", () => {
  it("matches the server rasterization pixel for pixel on every fixture", () => {
    expect(fixtures.length).toBeGreaterThanOrEqual(5);
    for (const fixture of fixtures) {
      const mask = rasterizePolygon(fixture.polygon, fixture.width, fixture.height);
      const setIndices: number[] = [];
      mask.forEach((v, i) => {
        if (v) setIndices.push(i);
      });
      expect(setIndices, fixture.name).toEqual(fixture.set_indices);
    }
  });

  it("fills the exact-pixel-bounds square with 256 pixels", () => {
    const square = fixtures.find((f) => f.name === "exact-square")!;
    const mask = rasterizePolygon(square.polygon, 32, 32);
    expect(mask.reduce((a, b) => a + b, 0)).toBe(256);
  });

  it("fills the full frame completely", () => {
    const mask = rasterizePolygon(
      [[0, 0], [1, 0], [1, 1], [0, 1]],
      16,
      16,
    );
    expect(mask.every((v) => v === 1)).toBe(true);
  });

  it("rejects degenerate and self-intersecting polygons", () => {
    expect(() => rasterizePolygon([[0, 0], [1, 1]], 16, 16)).toThrow();
    expect(() =>
      rasterizePolygon([[0, 0], [1, 1], [1, 0], [0, 1]], 16, 16),
    ).toThrow();
  });
});

describe("polygonIsSimple", () => {
  it("accepts a triangle", () => {
    expect(polygonIsSimple([[0, 0], [1, 0], [0.5, 1]])).toBe(true);
  });

  it("rejects the bowtie", () => {
    expect(polygonIsSimple([[0, 0], [1, 1], [1, 0], [0, 1]])).toBe(false);
  });

  it("rejects fewer than three vertices", () => {
    expect(polygonIsSimple([[0, 0], [1, 1]])).toBe(false);
  });
});

describe("validateDraft", () => {
  it("rejects a two-vertex draft", () => {
    expect(validateDraft({ polygon: [[0, 0], [1, 1]], label: "x" })).toMatch(/3 vertices/);
  });

  it("accepts a sane triangle", () => {
    expect(
      validateDraft({ polygon: [[0.1, 0.1], [0.8, 0.2], [0.4, 0.9]], label: "fg" }),
    ).toBeNull();
  });

  it("computes area fraction in (0, 1]", () => {
    expect(polygonAreaFraction([[0, 0], [1, 0], [1, 1], [0, 1]])).toBeCloseTo(1.0, 12);
    expect(polygonAreaFraction([[0, 0], [0.5, 0], [0.5, 0.5], [0, 0.5]])).toBeCloseTo(0.25, 12);
  });
});
