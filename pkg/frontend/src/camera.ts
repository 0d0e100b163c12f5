// First-person camera over a z-up world. Yaw spins about the world up axis,
// pitch tilts toward it, and the exported conversion produces the service's
// world-to-camera convention: x right, y down, z forward.

import type { CameraJson } from './types.js';

export type Vec3 = [number, number, number];

export interface CameraState {
  position: Vec3;
  yaw: number;
  pitch: number;
  fov: number;
  width: number;
  height: number;
}

// Open interval: straight up or down would make the horizontal heading
// undefined, so stop a hair short.
const PITCH_MARGIN = 1e-4;
export const PITCH_MAX = Math.PI / 2 - PITCH_MARGIN;

export const clampPitch = (pitch: number): number => {
  if (pitch > PITCH_MAX) {
    return PITCH_MAX;
  }
  if (pitch < -PITCH_MAX) {
    return -PITCH_MAX;
  }
  return pitch;
};

export function createCamera(width: number, height: number, overrides: Partial<CameraState> = {}): CameraState {
  const state: CameraState = {
    position: [0, 0, 10],
    yaw: 0,
    pitch: -0.3,
    fov: Math.PI / 3,
    width: Math.round(width),
    height: Math.round(height),
    ...overrides,
  };
  state.pitch = clampPitch(state.pitch);
  return state;
}

/** Unit view direction for a yaw/pitch pair. */
export function forwardVector(yaw: number, pitch: number): Vec3 {
  const cp = Math.cos(pitch);
  return [cp * Math.cos(yaw), cp * Math.sin(yaw), Math.sin(pitch)];
}

/**
 * World-to-camera rotation with rows (right, down, forward). Right stays
 * horizontal, so the horizon never rolls.
 */
export function rotationFromAngles(yaw: number, pitch: number): number[][] {
  const [fx, fy, fz] = forwardVector(yaw, pitch);
  const right: Vec3 = [Math.sin(yaw), -Math.cos(yaw), 0];
  const down: Vec3 = [
    fy * right[2] - fz * right[1],
    fz * right[0] - fx * right[2],
    fx * right[1] - fy * right[0],
  ];
  return [right, down, [fx, fy, fz]];
}

export function cameraToJson(state: CameraState): CameraJson {
  const rotation = rotationFromAngles(state.yaw, state.pitch);
  const p = state.position;
  const translation = rotation.map(
    (row) => -(row[0] * p[0] + row[1] * p[1] + row[2] * p[2]),
  );
  // Square pixels; the field of view is measured vertically.
  const fy = state.height / 2 / Math.tan(state.fov / 2);
  return {
    width: state.width,
    height: state.height,
    fx: fy,
    fy,
    cx: state.width / 2,
    cy: state.height / 2,
    rotation,
    translation,
  };
}

export interface MoveInput {
  /** -1..1, positive toward the view heading projected onto the ground. */
  forward: number;
  /** -1..1, positive toward the camera's right. */
  strafe: number;
}

/** WASD-style planar motion; altitude is handled separately by climb(). */
export function moveCamera(state: CameraState, input: MoveInput, distance: number): CameraState {
  const cy = Math.cos(state.yaw);
  const sy = Math.sin(state.yaw);
  const dx = (cy * input.forward + sy * input.strafe) * distance;
  const dy = (sy * input.forward - cy * input.strafe) * distance;
  const p = state.position;
  return { ...state, position: [p[0] + dx, p[1] + dy, p[2]] };
}

export function climb(state: CameraState, dz: number): CameraState {
  const p = state.position;
  return { ...state, position: [p[0], p[1], p[2] + dz] };
}

/** Mouse-look: dx turns, dy tilts; pitch stays strictly inside +/-90 deg. */
export function turnCamera(state: CameraState, dx: number, dy: number, sensitivity: number): CameraState {
  return {
    ...state,
    yaw: state.yaw + dx * sensitivity,
    pitch: clampPitch(state.pitch - dy * sensitivity),
  };
}
