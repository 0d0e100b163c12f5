import { describe, expect, it } from 'vitest';

import { cameraToJson, createCamera } from '../src/camera.js';
import { levelColor } from '../src/hud.js';
import {
  BOX_EDGES,
  boxCorners,
  containsPoint,
  drawBlockOverlay,
  projectPoint,
} from '../src/overlay.js';
import type { LinePainter } from '../src/overlay.js';
import type { BlockBox, BlockDecision } from '../src/types.js';

interface Segment {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  style: string;
  width: number;
}

class RecordingPainter implements LinePainter {
  strokeStyle: string | CanvasGradient | CanvasPattern = '';
  lineWidth = 0;
  segments: Segment[] = [];
  strokes = 0;
  private cx = 0;
  private cy = 0;

  beginPath(): void {}

  moveTo(x: number, y: number): void {
    this.cx = x;
    this.cy = y;
  }

  lineTo(x: number, y: number): void {
    this.segments.push({
      x1: this.cx,
      y1: this.cy,
      x2: x,
      y2: y,
      style: String(this.strokeStyle),
      width: this.lineWidth,
    });
    this.cx = x;
    this.cy = y;
  }

  stroke(): void {
    this.strokes += 1;
  }
}

const box = (id: number, min: number[], max: number[]): BlockBox => ({
  id,
  min,
  max,
  occupied: true,
  size: 100,
});

describe('box geometry', () => {
  it('enumerates eight corners and twelve single-axis edges', () => {
    const corners = boxCorners([0, 0, 0], [1, 2, 3]);
    expect(corners).toHaveLength(8);
    expect(corners[0]).toEqual([0, 0, 0]);
    expect(corners[7]).toEqual([1, 2, 3]);
    expect(BOX_EDGES).toHaveLength(12);
    for (const [a, b] of BOX_EDGES) {
      const diff = a ^ b;
      expect([1, 2, 4]).toContain(diff);
    }
  });

  it('containment is inclusive of the faces', () => {
    expect(containsPoint([0, 0, 0], [1, 1, 1], [0.5, 0.5, 1])).toBe(true);
    expect(containsPoint([0, 0, 0], [1, 1, 1], [1.5, 0.5, 0.5])).toBe(false);
  });
});

describe('corner projection', () => {
  it('matches an independent recomputation from the advertised bounds', () => {
    const cam = createCamera(320, 240, {
      position: [-10, 0, 0],
      yaw: 0,
      pitch: 0,
      fov: Math.PI / 3,
    });
    const bounds = { min: [-1, -1, -1], max: [1, 1, 1] };
    const painter = new RecordingPainter();
    drawBlockOverlay(painter, cam, [box(0, bounds.min, bounds.max)], [
      { id: 0, level: 2, distance: 10 },
    ]);
    expect(painter.segments).toHaveLength(12);

    // redo the projection by hand: world -> view via the posted matrix,
    // then the pinhole intrinsics from the same camera JSON
    const { rotation, translation, fx, fy, cx, cy } = cameraToJson(cam);
    const expected = boxCorners(bounds.min, bounds.max).map((c) => {
      const view = rotation.map(
        (row, i) => row[0] * c[0] + row[1] * c[1] + row[2] * c[2] + translation[i],
      );
      return [cx + (fx * view[0]) / view[2], cy + (fy * view[1]) / view[2]];
    });
    const key = (x: number, y: number): string => `${x.toFixed(6)},${y.toFixed(6)}`;
    const corners = new Set(expected.map(([x, y]) => key(x, y)));
    for (const seg of painter.segments) {
      expect(corners.has(key(seg.x1, seg.y1))).toBe(true);
      expect(corners.has(key(seg.x2, seg.y2))).toBe(true);
    }
  });

  it('reports points behind the camera as unusable', () => {
    const cam = createCamera(320, 240, { position: [0, 0, 0], yaw: 0, pitch: 0 });
    const behind = projectPoint(cam, [-5, 0, 0]);
    expect(behind.depth).toBeLessThan(0);
    expect(Number.isNaN(behind.x)).toBe(true);
  });
});

describe('overlay drawing', () => {
  const boxes: BlockBox[] = [
    box(0, [0, 0, 0], [10, 10, 10]),
    box(1, [20, 0, 0], [30, 10, 10]),
  ];

  it('draws only blocks the server marked visible', () => {
    const painter = new RecordingPainter();
    const visible: BlockDecision[] = [{ id: 1, level: 0, distance: 40 }];
    const cam = createCamera(320, 240, { position: [-40, 5, 5], yaw: 0, pitch: 0 });
    drawBlockOverlay(painter, cam, boxes, visible);
    expect(painter.strokes).toBe(1);
    expect(painter.segments).toHaveLength(12);
    expect(painter.segments.every((s) => s.style === levelColor(0))).toBe(true);
  });

  it('color-codes each block by its selected level', () => {
    const painter = new RecordingPainter();
    const visible: BlockDecision[] = [
      { id: 0, level: 2, distance: 12 },
      { id: 1, level: 0, distance: 55 },
    ];
    const cam = createCamera(320, 240, { position: [-40, 5, 5], yaw: 0, pitch: 0 });
    drawBlockOverlay(painter, cam, boxes, visible);
    const styles = new Set(painter.segments.map((s) => s.style));
    expect(styles).toEqual(new Set([levelColor(2), levelColor(0)]));
    expect(levelColor(2)).not.toBe(levelColor(0));
  });

  it('highlights the block containing the camera', () => {
    const painter = new RecordingPainter();
    const visible: BlockDecision[] = [
      { id: 0, level: 2, distance: 1 },
      { id: 1, level: 2, distance: 25 },
    ];
    const cam = createCamera(320, 240, { position: [5, 5, 5], yaw: 0, pitch: 0 });
    drawBlockOverlay(painter, cam, boxes, visible);
    const inside = painter.segments.filter((s) => s.style === levelColor(2) && s.width > 3);
    const outside = painter.segments.filter((s) => s.width <= 3);
    expect(inside.length).toBeGreaterThan(0);
    expect(outside.length).toBe(12);
  });

  it('clips edges crossing the near plane instead of producing NaNs', () => {
    const painter = new RecordingPainter();
    const cam = createCamera(320, 240, { position: [5, 5, 5], yaw: 0.3, pitch: -0.2 });
    drawBlockOverlay(painter, cam, [boxes[0]], [{ id: 0, level: 1, distance: 1 }]);
    expect(painter.segments.length).toBeGreaterThan(0);
    expect(painter.segments.length).toBeLessThan(12);
    for (const seg of painter.segments) {
      for (const v of [seg.x1, seg.y1, seg.x2, seg.y2]) {
        expect(Number.isFinite(v)).toBe(true);
      }
    }
  });
});
