import { describe, expect, it } from "vitest";

import { inStamp, rasterizeStrokes, type Stroke } from "../src/raster.js";

function bruteForceStamp(size: number, cx: number, cy: number, radius: number): Set<number> {
  // independent oracle: scan every pixel against the stamp inequality
  const hit = new Set<number>();
  const px = Math.round(cx);
  const py = Math.round(cy);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const dx = x - px;
      const dy = y - py;
      if (dx * dx + dy * dy <= radius * radius + radius) hit.add(y * size + x);
    }
  }
  return hit;
}

describe("rasterizeStrokes", () => {
  it("empty strokes give an all-none map", () => {
    const labels = rasterizeStrokes([], 16);
    expect(labels.every((v) => v === 0)).toBe(true);
  });

  it("single point at radius 1 stamps the full 3x3 block", () => {
    const labels = rasterizeStrokes(
      [{ classId: 2, radius: 1, points: [{ x: 8, y: 8 }] }],
      16,
    );
    let count = 0;
    for (let y = 0; y < 16; y++) {
      for (let x = 0; x < 16; x++) {
        const expected = Math.abs(x - 8) <= 1 && Math.abs(y - 8) <= 1 ? 2 : 0;
        expect(labels[y * 16 + x]).toBe(expected);
        if (labels[y * 16 + x] !== 0) count++;
      }
    }
    expect(count).toBe(9);
  });

  it("matches the brute-force stamping oracle for random strokes", () => {
    const size = 24;
    for (let trial = 0; trial < 10; trial++) {
      const x = 3 + ((trial * 7) % 17);
      const y = 3 + ((trial * 5) % 17);
      const radius = 1 + (trial % 3);
      const labels = rasterizeStrokes(
        [{ classId: 3, radius, points: [{ x, y }] }],
        size,
      );
      const oracle = bruteForceStamp(size, x, y, radius);
      for (let i = 0; i < size * size; i++) {
        expect(labels[i] === 3).toBe(oracle.has(i));
      }
    }
  });

  it("later strokes overwrite earlier at overlaps (painter rule)", () => {
    const strokes: Stroke[] = [
      { classId: 1, radius: 2, points: [{ x: 8, y: 8 }] },
      { classId: 4, radius: 1, points: [{ x: 8, y: 8 }] },
    ];
    const labels = rasterizeStrokes(strokes, 16);
    expect(labels[8 * 16 + 8]).toBe(4); // center: later class wins
    expect(labels[8 * 16 + 11]).toBe(0); // outside both
    expect(labels[6 * 16 + 8]).toBe(1); // ring of the first stroke
  });

  it("class 0 strokes erase", () => {
    const strokes: Stroke[] = [
      { classId: 2, radius: 2, points: [{ x: 8, y: 8 }] },
      { classId: 0, radius: 1, points: [{ x: 8, y: 8 }] },
    ];
    const labels = rasterizeStrokes(strokes, 16);
    expect(labels[8 * 16 + 8]).toBe(0);
  });

  it("polyline stamping is continuous: no gaps along a segment", () => {
    const labels = rasterizeStrokes(
      [{ classId: 1, radius: 1, points: [{ x: 2, y: 2 }, { x: 20, y: 14 }] }],
      24,
    );
    // every sample along the segment must be covered
    for (let t = 0; t <= 1.0001; t += 0.05) {
      const x = Math.round(2 + t * 18);
      const y = Math.round(2 + t * 12);
      expect(labels[y * 24 + x]).toBe(1);
    }
  });

  it("rasterization is deterministic", () => {
    const strokes: Stroke[] = [
      { classId: 1, radius: 2, points: [{ x: 4, y: 4 }, { x: 12, y: 9 }] },
    ];
    expect(rasterizeStrokes(strokes, 16)).toEqual(rasterizeStrokes(strokes, 16));
  });

  it("radius-1 stamp includes diagonals", () => {
    expect(inStamp(1, 1, 1)).toBe(true);
    expect(inStamp(2, 0, 1)).toBe(false);
  });
});
