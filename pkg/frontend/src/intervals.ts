// Distance-interval editing. The server wants a full ladder: contiguous
// intervals starting at 0 with an unbounded tail. The UI edits only the
// inner edges; the first 0 and the trailing infinity are implied.

import type { Interval } from './types.js';

export interface IntervalPreset {
  label: string;
  intervals: Interval[];
}

/** One-click ladders spanning near, default and far switching distances. */
export const INTERVAL_PRESETS: IntervalPreset[] = [
  { label: '150 / 300', intervals: [[0, 150], [150, 300], [300, null]] },
  { label: '200 / 400', intervals: [[0, 200], [200, 400], [400, null]] },
  { label: '250 / 500', intervals: [[0, 250], [250, 500], [500, null]] },
];

export function edgesToIntervals(edges: number[]): Interval[] {
  const intervals: Interval[] = [];
  let lo = 0;
  for (const edge of edges) {
    intervals.push([lo, edge]);
    lo = edge;
  }
  intervals.push([lo, null]);
  return intervals;
}

/** Inner edges of a ladder; ignores the implied 0 and the unbounded tail. */
export function intervalsToEdges(intervals: Interval[]): number[] {
  return intervals.slice(0, -1).map(([, hi]) => hi as number);
}

/**
 * Reject ladders the server would refuse: every inner edge must be a
 * positive finite number and the sequence strictly ascending, otherwise
 * intervals would overlap or be empty.
 */
export function edgesError(edges: number[]): string | null {
  let prev = 0;
  for (const edge of edges) {
    if (!Number.isFinite(edge)) {
      return 'interval edges must be numbers';
    }
    if (edge <= prev) {
      return `edge ${edge} must exceed ${prev}; intervals may not overlap`;
    }
    prev = edge;
  }
  return null;
}
