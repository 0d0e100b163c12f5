import type { FrameStats } from './types.js';

// Coarse-to-fine palette shared by the HUD legend and the block overlay.
// Level indices count upward toward the finest set.
export const LEVEL_COLORS = [
  '#e05c3a',
  '#e0b13a',
  '#7ad04e',
  '#4ec9d0',
  '#7a6cf0',
  '#d06cd0',
];

export const levelColor = (level: number): string =>
  LEVEL_COLORS[((level % LEVEL_COLORS.length) + LEVEL_COLORS.length) % LEVEL_COLORS.length];

const countByLevel = (stats: FrameStats): Map<number, number> => {
  const counts = new Map<number, number>();
  for (const block of stats.blocks) {
    counts.set(block.level, (counts.get(block.level) ?? 0) + 1);
  }
  return counts;
};

/** Text lines for the stats panel. */
export function hudLines(stats: FrameStats | null): string[] {
  if (stats === null) {
    return ['no frame yet'];
  }
  const lines = [
    `render ${stats.render_ms.toFixed(1)} ms (${stats.fps_estimate.toFixed(1)} fps)`,
    `visible ${stats.visible_gaussians.toLocaleString()}` +
      ` of ${stats.assembled_gaussians.toLocaleString()} assembled`,
    `detail levels ${stats.lod_enabled ? 'on' : 'off'}`,
  ];
  if (stats.blocks.length > 0) {
    const parts = [...countByLevel(stats).entries()]
      .sort((a, b) => a[0] - b[0])
      .map(([level, n]) => `L${level}×${n}`);
    lines.push(`blocks ${stats.blocks.length} visible (${parts.join(' ')})`);
  }
  return lines;
}
