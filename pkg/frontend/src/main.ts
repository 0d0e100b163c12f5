// Entry point: wires the camera, frame loop, HUD and overlay to the page.
// Everything here is glue; the logic lives in the imported modules.

import type { CameraState } from './camera.js';
import {
  cameraToJson,
  climb,
  createCamera,
  moveCamera,
  turnCamera,
} from './camera.js';
import { isUnreachable, ServiceClient, ServiceError } from './client.js';
import { FrameLoop } from './frameLoop.js';
import { hudLines, levelColor } from './hud.js';
import {
  edgesError,
  edgesToIntervals,
  INTERVAL_PRESETS,
  intervalsToEdges,
} from './intervals.js';
import { drawBlockOverlay } from './overlay.js';
import type { BlockBox, FrameStats, Interval, SceneInfo } from './types.js';

const FRAME_WIDTH = 640;
const FRAME_HEIGHT = 480;
const LOOK_SENSITIVITY = 0.0025;
const WHEEL_STEP = 0.05;

function element<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
}

interface FramePayload {
  url: string;
  stats: FrameStats;
}

/** Start above the middle of the scene, looking gently down. */
function spawnCamera(info: SceneInfo, width: number, height: number): CameraState {
  let lo = [Infinity, Infinity, Infinity];
  let hi = [-Infinity, -Infinity, -Infinity];
  for (let j = 0; j < info.n_blocks; j += 1) {
    lo = lo.map((v, k) => Math.min(v, info.bounds_min[j][k]));
    hi = hi.map((v, k) => Math.max(v, info.bounds_max[j][k]));
  }
  const extent = Math.max(hi[0] - lo[0], hi[1] - lo[1], 1);
  return createCamera(width, height, {
    position: [
      (lo[0] + hi[0]) / 2,
      (lo[1] + hi[1]) / 2 - 0.35 * extent,
      hi[2] + 0.25 * extent,
    ],
    yaw: Math.PI / 2,
    pitch: -0.45,
  });
}

function start(): void {
  const frameImg = element<HTMLImageElement>('frame');
  const overlayCanvas = element<HTMLCanvasElement>('overlay');
  const hudPanel = element<HTMLPreElement>('hud');
  const legend = element<HTMLDivElement>('legend');
  const banner = element<HTMLDivElement>('banner');
  const bannerText = element<HTMLSpanElement>('banner-text');
  const retryButton = element<HTMLButtonElement>('retry');
  const edgesInput = element<HTMLInputElement>('edges');
  const applyButton = element<HTMLButtonElement>('apply-edges');
  const edgesMessage = element<HTMLSpanElement>('edges-message');
  const presetBar = element<HTMLDivElement>('presets');
  const lodToggle = element<HTMLInputElement>('lod-toggle');
  const overlayToggle = element<HTMLInputElement>('overlay-toggle');

  const client = new ServiceClient('');
  let info: SceneInfo | null = null;
  let boxes: BlockBox[] = [];
  let camera = createCamera(FRAME_WIDTH, FRAME_HEIGHT);
  let shownUrl: string | null = null;
  let moveSpeed = 20;

  const showBanner = (message: string): void => {
    bannerText.textContent = message;
    banner.style.display = 'flex';
  };
  const hideBanner = (): void => {
    banner.style.display = 'none';
  };

  const drawOverlay = (state: CameraState, stats: FrameStats): void => {
    const ctx = overlayCanvas.getContext('2d');
    if (ctx === null) {
      return;
    }
    ctx.clearRect(0, 0, overlayCanvas.width, overlayCanvas.height);
    if (overlayToggle.checked) {
      drawBlockOverlay(ctx, state, boxes, stats.blocks);
    }
  };

  const loop = new FrameLoop<CameraState, FramePayload>(
    async (state) => {
      const frame = await client.render({ camera: cameraToJson(state) });
      const stats = await client.lastStats();
      return { url: URL.createObjectURL(frame.png), stats };
    },
    (payload, state) => {
      if (shownUrl !== null) {
        URL.revokeObjectURL(shownUrl);
      }
      shownUrl = payload.url;
      frameImg.src = payload.url;
      hudPanel.textContent = hudLines(payload.stats).join('\n');
      drawOverlay(state, payload.stats);
      hideBanner();
    },
    (err) => {
      if (err instanceof ServiceError) {
        const where = err.field === undefined ? '' : `${err.field}: `;
        showBanner(`request rejected - ${where}${err.message}`);
      } else if (isUnreachable(err)) {
        showBanner('render service unreachable');
      }
    },
  );

  const requestFrame = (): void => loop.request(camera);
  retryButton.addEventListener('click', () => {
    hideBanner();
    if (info === null) {
      void boot();
    } else {
      requestFrame();
    }
  });

  // --- flight controls -------------------------------------------------
  const held = new Set<string>();
  document.addEventListener('keydown', (ev) => held.add(ev.code));
  document.addEventListener('keyup', (ev) => held.delete(ev.code));
  window.addEventListener('blur', () => held.clear());

  frameImg.parentElement?.addEventListener('click', () => {
    overlayCanvas.requestPointerLock();
  });
  document.addEventListener('mousemove', (ev) => {
    if (document.pointerLockElement === overlayCanvas) {
      camera = turnCamera(camera, ev.movementX, ev.movementY, LOOK_SENSITIVITY);
      requestFrame();
    }
  });
  overlayCanvas.addEventListener('wheel', (ev) => {
    ev.preventDefault();
    camera = climb(camera, -ev.deltaY * WHEEL_STEP * moveSpeed * 0.1);
    requestFrame();
  });

  let lastTick = performance.now();
  const tick = (now: number): void => {
    const dt = Math.min((now - lastTick) / 1000, 0.1);
    lastTick = now;
    const forward = (held.has('KeyW') ? 1 : 0) - (held.has('KeyS') ? 1 : 0);
    const strafe = (held.has('KeyD') ? 1 : 0) - (held.has('KeyA') ? 1 : 0);
    if (forward !== 0 || strafe !== 0) {
      camera = moveCamera(camera, { forward, strafe }, moveSpeed * dt);
      requestFrame();
    }
    requestAnimationFrame(tick);
  };
  requestAnimationFrame(tick);

  // --- interval controls ------------------------------------------------
  const submitIntervals = (intervals: Interval[]): void => {
    client
      .setLod({ intervals })
      .then((ack) => {
        edgesInput.value = intervalsToEdges(ack.intervals).join(', ');
        edgesMessage.textContent = '';
        requestFrame();
      })
      .catch((err) => {
        edgesMessage.textContent =
          err instanceof ServiceError ? err.message : 'service unreachable';
      });
  };

  applyButton.addEventListener('click', () => {
    const edges = edgesInput.value
      .split(',')
      .map((part) => Number(part.trim()));
    const problem = edgesError(edges);
    if (problem !== null) {
      edgesMessage.textContent = problem;
      return;
    }
    if (info !== null && edges.length !== info.n_levels - 1) {
      edgesMessage.textContent = `need ${info.n_levels - 1} edges for this scene`;
      return;
    }
    submitIntervals(edgesToIntervals(edges));
  });

  for (const preset of INTERVAL_PRESETS) {
    const button = document.createElement('button');
    button.textContent = preset.label;
    button.addEventListener('click', () => submitIntervals(preset.intervals));
    presetBar.appendChild(button);
  }

  lodToggle.addEventListener('change', () => {
    client
      .setLod({ enabled: lodToggle.checked })
      .then(() => requestFrame())
      .catch(() => showBanner('render service unreachable'));
  });
  overlayToggle.addEventListener('change', requestFrame);

  // --- startup ----------------------------------------------------------
  async function boot(): Promise<void> {
    try {
      info = await client.sceneInfo();
      boxes = await client.blocks();
    } catch {
      showBanner('render service unreachable');
      return;
    }
    const width = Math.min(FRAME_WIDTH, info.max_dim);
    const height = Math.min(FRAME_HEIGHT, info.max_dim);
    frameImg.width = width;
    frameImg.height = height;
    overlayCanvas.width = width;
    overlayCanvas.height = height;
    camera = spawnCamera(info, width, height);
    moveSpeed = Math.max(...boxes.map((b) => b.max[0] - b.min[0]), 5) * 2;
    lodToggle.checked = info.lod_enabled;
    edgesInput.value = intervalsToEdges(info.intervals).join(', ');
    legend.innerHTML = '';
    for (let level = 0; level < info.n_levels; level += 1) {
      const chip = document.createElement('span');
      chip.textContent = `L${level}`;
      chip.style.color = levelColor(level);
      legend.appendChild(chip);
    }
    requestFrame();
  }
  void boot();
}

if (typeof document !== 'undefined') {
  document.addEventListener('DOMContentLoaded', start);
}
