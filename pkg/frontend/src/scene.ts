// First-person scene: fixed camera at (0, 0, 1.65) looking along +x with a
// 90-degree horizontal field of view.  World frame: x forward, y right, z up.

import type { StateUpdate } from "./protocol.js";

export type Point3 = [number, number, number];

export const CAMERA_POS: Point3 = [0, 0, 1.65];
export const CAMERA_FOV_DEG = 90;
const NEAR = 0.05;

export interface Landmark {
  shape: "triangular_pyramid" | "cube";
  pos: Point3;
}

// Fallback orientation landmarks; the server announces its own scene in the
// configured checkpoint.
export const LANDMARKS: Landmark[] = [
  { shape: "triangular_pyramid", pos: [4, -2.5, 0] },
  { shape: "cube", pos: [4, 2.5, 0] },
];

export interface TaskGeometry {
  kind: "pointing" | "crossing";
  width: number;
  target: Point3;
  start: Point3;
}

export interface Projected {
  x: number; // pixels, left-origin
  y: number; // pixels, top-origin
  depth: number;
}

/** Perspective projection onto a view of the given pixel size; null when the
 * point sits at or behind the near plane.  tan(fov/2) = 1 horizontally; the
 * vertical tangent follows the aspect ratio. */
export function project(
  p: Point3, viewW: number, viewH: number, camera: Point3 = CAMERA_POS,
): Projected | null {
  const forward = p[0] - camera[0];
  if (forward < NEAR) return null;
  const right = p[1] - camera[1];
  const up = p[2] - camera[2];
  const tanH = Math.tan((CAMERA_FOV_DEG * Math.PI) / 360);
  const tanV = tanH * (viewH / viewW);
  const ndcX = right / forward / tanH;
  const ndcY = up / forward / tanV;
  return {
    x: (viewW / 2) * (1 + ndcX),
    y: (viewH / 2) * (1 - ndcY),
    depth: forward,
  };
}

/** Linear interpolation between two states, for rendering between the ~33 Hz
 * stream updates. */
export function lerpPosition(a: StateUpdate, b: StateUpdate, t: number): Point3 {
  const k = Math.max(0, Math.min(1, t));
  return [
    a.px + (b.px - a.px) * k,
    a.py + (b.py - a.py) * k,
    a.pz + (b.pz - a.pz) * k,
  ];
}

// Minimal 2D context surface so tests can pass a recording stub.
export interface Ctx2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
}

function polygon(ctx: Ctx2D, pts: Projected[], fill: string): void {
  if (pts.length < 3) return;
  ctx.fillStyle = fill;
  ctx.beginPath();
  ctx.moveTo(pts[0].x, pts[0].y);
  for (const p of pts.slice(1)) ctx.lineTo(p.x, p.y);
  ctx.closePath();
  ctx.fill();
}

function projectAll(pts: Point3[], w: number, h: number): Projected[] | null {
  const out: Projected[] = [];
  for (const p of pts) {
    const q = project(p, w, h);
    if (q === null) return null;
    out.push(q);
  }
  return out;
}

/** Schematic flat-shaded render: sky, ground, landmarks, task target, drone. */
export function renderScene(
  ctx: Ctx2D, viewW: number, viewH: number,
  drone: Point3 | null, task: TaskGeometry | null,
  landmarks: Landmark[] | null = null,
): void {
  const horizon = project([1000, 0, CAMERA_POS[2]], viewW, viewH);
  const horizonY = horizon ? horizon.y : viewH / 2;
  ctx.fillStyle = "#cfe6f5";
  ctx.fillRect(0, 0, viewW, horizonY);
  ctx.fillStyle = "#dbe7d2";
  ctx.fillRect(0, horizonY, viewW, viewH - horizonY);

  for (const landmark of landmarks ?? LANDMARKS) {
    const [lx, ly] = [landmark.pos[0], landmark.pos[1]];
    const size = 0.6;
    if (landmark.shape === "cube") {
      const face = projectAll(
        [[lx, ly - size / 2, 0], [lx, ly + size / 2, 0],
         [lx, ly + size / 2, size], [lx, ly - size / 2, size]],
        viewW, viewH,
      );
      if (face) polygon(ctx, face, "#8d8d8d");
    } else {
      const face = projectAll(
        [[lx, ly - size / 2, 0], [lx, ly + size / 2, 0], [lx, ly, size]],
        viewW, viewH,
      );
      if (face) polygon(ctx, face, "#b0893b");
    }
  }

  if (task) {
    const [tx, ty, tz] = task.target;
    const half = task.width / 2;
    if (task.kind === "pointing") {
      const plate = projectAll(
        [[tx - half, ty - half, 0], [tx - half, ty + half, 0],
         [tx + half, ty + half, 0], [tx + half, ty - half, 0]],
        viewW, viewH,
      );
      if (plate) polygon(ctx, plate, "#c43a3a");
    } else {
      const border = 0.05;
      const outer = half + border;
      const ring: [Point3, Point3, Point3, Point3][] = [
        // left, right, bottom, top beams of the door frame
        [[tx, ty - outer, tz - outer], [tx, ty - half, tz - outer],
         [tx, ty - half, tz + outer], [tx, ty - outer, tz + outer]],
        [[tx, ty + half, tz - outer], [tx, ty + outer, tz - outer],
         [tx, ty + outer, tz + outer], [tx, ty + half, tz + outer]],
        [[tx, ty - half, tz - outer], [tx, ty + half, tz - outer],
         [tx, ty + half, tz - half], [tx, ty - half, tz - half]],
        [[tx, ty - half, tz + half], [tx, ty + half, tz + half],
         [tx, ty + half, tz + outer], [tx, ty - half, tz + outer]],
      ];
      for (const beam of ring) {
        const quad = projectAll(beam, viewW, viewH);
        if (quad) polygon(ctx, quad, "#c43a3a");
      }
    }
  }

  if (drone) {
    const [dx, dy, dz] = drone;
    const he = 0.09;
    const shadow = projectAll(
      [[dx - he, dy - he, 0], [dx - he, dy + he, 0], [dx + he, dy + he, 0], [dx + he, dy - he, 0]],
      viewW, viewH,
    );
    if (shadow) polygon(ctx, shadow, "rgba(40,40,40,0.25)");
    const body = projectAll(
      [[dx - he, dy - he, dz], [dx - he, dy + he, dz], [dx + he, dy + he, dz], [dx + he, dy - he, dz]],
      viewW, viewH,
    );
    if (body) polygon(ctx, body, "#233a66");
  }
}
