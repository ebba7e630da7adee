// Stroke rasterization: round disk stamps along each polyline, with later
// strokes overwriting earlier ones (painter's rule). Deterministic: the label
// map is a pure function of the stroke list.

export interface Stroke {
  classId: number; // 0 erases (paints "none")
  radius: number; // in label-map pixels, >= 1
  points: Array<{ x: number; y: number }>; // label-map coordinates
}

/** Pixels within the stamp: |q - p|^2 <= r^2 + r. The +r term rounds the
 * disk so radius 1 covers the full 3x3 block. */
export function inStamp(dx: number, dy: number, radius: number): boolean {
  return dx * dx + dy * dy <= radius * radius + radius;
}

function stampDisk(
  labels: Uint8Array,
  size: number,
  cx: number,
  cy: number,
  radius: number,
  classId: number,
): void {
  const r = Math.ceil(radius);
  const px = Math.round(cx);
  const py = Math.round(cy);
  for (let y = Math.max(0, py - r); y <= Math.min(size - 1, py + r); y++) {
    for (let x = Math.max(0, px - r); x <= Math.min(size - 1, px + r); x++) {
      if (inStamp(x - px, y - py, radius)) {
        labels[y * size + x] = classId;
      }
    }
  }
}

export function rasterizeStrokes(strokes: Stroke[], size: number): Uint8Array {
  const labels = new Uint8Array(size * size); // all "none"
  for (const stroke of strokes) {
    if (stroke.points.length === 0) continue;
    const pts = stroke.points;
    stampDisk(labels, size, pts[0].x, pts[0].y, stroke.radius, stroke.classId);
    for (let i = 1; i < pts.length; i++) {
      const a = pts[i - 1];
      const b = pts[i];
      const dist = Math.hypot(b.x - a.x, b.y - a.y);
      const steps = Math.max(1, Math.ceil(dist * 2)); // half-pixel sampling
      for (let s = 1; s <= steps; s++) {
        const t = s / steps;
        stampDisk(
          labels,
          size,
          a.x + t * (b.x - a.x),
          a.y + t * (b.y - a.y),
          stroke.radius,
          stroke.classId,
        );
      }
    }
  }
  return labels;
}
