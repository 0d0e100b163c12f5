// Block wireframe overlay. Projects the server-reported world boxes onto
// the current view and strokes their edges, color-coded by the level the
// server picked for each block this frame. Pure presentation: which blocks
// are visible and at what level is decided entirely by the service.

import type { CameraState, Vec3 } from './camera.js';
import { cameraToJson } from './camera.js';
import { levelColor } from './hud.js';
import type { BlockBox, BlockDecision } from './types.js';

/** The subset of CanvasRenderingContext2D the overlay draws with. */
export interface LinePainter {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
}

const NEAR_PLANE = 1e-3;
const BASE_WIDTH = 1.5;
const HIGHLIGHT_WIDTH = 4;

/** Corner i has bit k set when it sits at max along axis k. */
export function boxCorners(min: number[], max: number[]): Vec3[] {
  const corners: Vec3[] = [];
  for (let i = 0; i < 8; i += 1) {
    corners.push([
      i & 1 ? max[0] : min[0],
      i & 2 ? max[1] : min[1],
      i & 4 ? max[2] : min[2],
    ]);
  }
  return corners;
}

// Pairs of corner indices differing in exactly one bit: the 12 box edges.
export const BOX_EDGES: Array<[number, number]> = (() => {
  const edges: Array<[number, number]> = [];
  for (let a = 0; a < 8; a += 1) {
    for (const bit of [1, 2, 4]) {
      if ((a & bit) === 0) {
        edges.push([a, a | bit]);
      }
    }
  }
  return edges;
})();

export const containsPoint = (min: number[], max: number[], p: Vec3): boolean =>
  p.every((v, axis) => v >= min[axis] && v <= max[axis]);

/**
 * Pixel position plus camera-space depth for one world point. Points at or
 * behind the near plane get NaN pixels and must not be stroked.
 */
export function projectPoint(cam: CameraState, p: Vec3): { x: number; y: number; depth: number } {
  const { rotation, translation, fx, fy, cx, cy } = cameraToJson(cam);
  const view = rotation.map(
    (row, i) => row[0] * p[0] + row[1] * p[1] + row[2] * p[2] + translation[i],
  );
  const depth = view[2];
  if (depth < NEAR_PLANE) {
    return { x: NaN, y: NaN, depth };
  }
  return { x: cx + (fx * view[0]) / depth, y: cy + (fy * view[1]) / depth, depth };
}

/**
 * Stroke the wireframe of every block the server marked visible this
 * frame. The box holding the camera gets a heavier outline so the viewer
 * can tell which cell they are flying through.
 */
export function drawBlockOverlay(
  ctx: LinePainter,
  cam: CameraState,
  boxes: BlockBox[],
  visible: BlockDecision[],
): void {
  const decisions = new Map(visible.map((d) => [d.id, d]));
  for (const box of boxes) {
    const decision = decisions.get(box.id);
    if (decision === undefined) {
      continue;
    }
    const projected = boxCorners(box.min, box.max).map((c) => projectPoint(cam, c));
    ctx.strokeStyle = levelColor(decision.level);
    ctx.lineWidth = containsPoint(box.min, box.max, cam.position)
      ? HIGHLIGHT_WIDTH
      : BASE_WIDTH;
    ctx.beginPath();
    let any = false;
    for (const [a, b] of BOX_EDGES) {
      if (projected[a].depth < NEAR_PLANE || projected[b].depth < NEAR_PLANE) {
        continue;
      }
      ctx.moveTo(projected[a].x, projected[a].y);
      ctx.lineTo(projected[b].x, projected[b].y);
      any = true;
    }
    if (any) {
      ctx.stroke();
    }
  }
}
