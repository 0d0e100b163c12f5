// Thin fetch wrapper around the render service. Every route the viewer
// touches goes through here; the fetch implementation is injectable so
// tests can run against a scripted service.

import type {
  BlockBox,
  FrameStats,
  HeaderStats,
  LodAck,
  LodOverride,
  RenderRequest,
  SceneInfo,
} from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** An HTTP-level rejection; 400s carry the offending field name. */
export class ServiceError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly field?: string,
  ) {
    super(message);
    this.name = 'ServiceError';
  }
}

/** True for network-level failures (server down), false for HTTP errors. */
export const isUnreachable = (err: unknown): boolean => !(err instanceof ServiceError);

export interface RenderedFrame {
  png: Blob;
  stats: HeaderStats;
}

async function errorFromResponse(resp: Response): Promise<ServiceError> {
  let message = `${resp.status} ${resp.statusText}`;
  let field: string | undefined;
  try {
    const body = await resp.json();
    if (typeof body.error === 'string') {
      message = body.error;
    }
    if (typeof body.field === 'string') {
      field = body.field;
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ServiceError(resp.status, message, field);
}

const headerNumber = (resp: Response, name: string): number => {
  const raw = resp.headers.get(name);
  return raw === null ? NaN : Number(raw);
};

export class ServiceClient {
  private fetchFn: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path);
    if (!resp.ok) {
      throw await errorFromResponse(resp);
    }
    return resp.json() as Promise<T>;
  }

  private async post(path: string, body: unknown): Promise<Response> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!resp.ok) {
      throw await errorFromResponse(resp);
    }
    return resp;
  }

  sceneInfo(): Promise<SceneInfo> {
    return this.getJson<SceneInfo>('/scene/info');
  }

  async blocks(): Promise<BlockBox[]> {
    const body = await this.getJson<{ blocks: BlockBox[] }>('/blocks');
    return body.blocks;
  }

  lastStats(): Promise<FrameStats> {
    return this.getJson<FrameStats>('/stats/last');
  }

  async setLod(update: LodOverride): Promise<LodAck> {
    const resp = await this.post('/lod', update);
    return resp.json() as Promise<LodAck>;
  }

  async render(request: RenderRequest): Promise<RenderedFrame> {
    const resp = await this.post('/render', request);
    return {
      png: await resp.blob(),
      stats: {
        renderMs: headerNumber(resp, 'X-Render-Ms'),
        visibleGaussians: headerNumber(resp, 'X-Visible-Gaussians'),
        assembledGaussians: headerNumber(resp, 'X-Assembled-Gaussians'),
        fpsEstimate: headerNumber(resp, 'X-Fps-Estimate'),
      },
    };
  }
}
