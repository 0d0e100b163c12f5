// Wire types for the render service. Field names match the JSON payloads
// exactly; an unbounded upper interval edge travels as null.

export type Interval = [number, number | null];

export interface CameraJson {
  width: number;
  height: number;
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  rotation: number[][];
  translation: number[];
}

export interface LodOverride {
  intervals?: Interval[];
  enabled?: boolean;
}

export interface RenderRequest {
  camera: CameraJson;
  lod?: LodOverride;
  want_overlay?: boolean;
}

export interface SceneInfo {
  n_blocks: number;
  n_levels: number;
  level_sizes: number[];
  full_size: number;
  sh_degrees: number[];
  intervals: Interval[];
  lod_enabled: boolean;
  n_mad: number;
  bounds_min: number[][];
  bounds_max: number[][];
  max_dim: number;
}

export interface BlockBox {
  id: number;
  min: number[];
  max: number[];
  occupied: boolean;
  size: number;
}

export interface BlockDecision {
  id: number;
  level: number;
  distance: number;
  screen_box?: number[] | null;
}

export interface FrameStats {
  render_ms: number;
  visible_gaussians: number;
  assembled_gaussians: number;
  fps_estimate: number;
  lod_enabled: boolean;
  blocks: BlockDecision[];
}

export interface LodAck {
  ok: boolean;
  intervals: Interval[];
  enabled: boolean;
}

/** Per-frame numbers parsed from the X- headers of a /render response. */
export interface HeaderStats {
  renderMs: number;
  visibleGaussians: number;
  assembledGaussians: number;
  fpsEstimate: number;
}
