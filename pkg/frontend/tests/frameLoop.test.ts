import { describe, expect, it } from 'vitest';

import { FrameGate, FrameLoop } from '../src/frameLoop.js';

interface Pending {
  state: number;
  resolve: (frame: string) => void;
  reject: (err: unknown) => void;
}

function harness() {
  const sent: Pending[] = [];
  const shown: string[] = [];
  const errors: unknown[] = [];
  const loop = new FrameLoop<number, string>(
    (state) =>
      new Promise<string>((resolve, reject) => {
        sent.push({ state, resolve, reject });
      }),
    (frame) => shown.push(frame),
    (err) => errors.push(err),
  );
  return { loop, sent, shown, errors };
}

const flush = (): Promise<void> => new Promise((resolve) => setTimeout(resolve, 0));

describe('request coalescing', () => {
  it('keeps at most one request in flight', async () => {
    const h = harness();
    h.loop.request(1);
    h.loop.request(2);
    h.loop.request(3);
    expect(h.sent).toHaveLength(1);
    expect(h.loop.busy).toBe(true);
    h.sent[0].resolve('frame-1');
    await flush();
    expect(h.sent).toHaveLength(2);
    h.sent[1].resolve('frame-3');
    await flush();
    expect(h.loop.busy).toBe(false);
  });

  it('drops every intermediate state, sending only the latest', async () => {
    const h = harness();
    for (let state = 1; state <= 9; state += 1) {
      h.loop.request(state);
    }
    h.sent[0].resolve('frame-1');
    await flush();
    h.sent[1].resolve('frame-9');
    await flush();
    expect(h.sent.map((p) => p.state)).toEqual([1, 9]);
    expect(h.shown).toEqual(['frame-1', 'frame-9']);
  });

  it('never displays an older frame after a newer one', async () => {
    // Deterministic random schedule of camera updates and completions;
    // displayed labels must stay strictly increasing throughout.
    const h = harness();
    let state = 0;
    let resolved = 0;
    let x = 123456789;
    const rand = (): number => {
      x ^= x << 13;
      x ^= x >>> 17;
      x ^= x << 5;
      return (x >>> 0) / 4294967296;
    };
    for (let step = 0; step < 400; step += 1) {
      if (rand() < 0.6) {
        state += 1;
        h.loop.request(state);
      }
      if (resolved < h.sent.length && rand() < 0.5) {
        h.sent[resolved].resolve(`frame-${h.sent[resolved].state}`);
        resolved += 1;
        await flush();
      }
    }
    while (resolved < h.sent.length) {
      h.sent[resolved].resolve(`frame-${h.sent[resolved].state}`);
      resolved += 1;
      await flush();
    }
    expect(h.shown.length).toBeGreaterThan(10);
    const labels = h.shown.map((f) => Number(f.split('-')[1]));
    for (let i = 1; i < labels.length; i += 1) {
      expect(labels[i]).toBeGreaterThan(labels[i - 1]);
    }
    // the newest state always made it to the screen eventually
    expect(labels[labels.length - 1]).toBe(state);
  });

  it('recovers after a failed request', async () => {
    const h = harness();
    h.loop.request(1);
    h.sent[0].reject(new TypeError('fetch failed'));
    await flush();
    expect(h.errors).toHaveLength(1);
    expect(h.shown).toEqual([]);
    h.loop.request(2);
    expect(h.sent).toHaveLength(2);
    h.sent[1].resolve('frame-2');
    await flush();
    expect(h.shown).toEqual(['frame-2']);
  });

  it('sends a queued state even if the active request fails', async () => {
    const h = harness();
    h.loop.request(1);
    h.loop.request(2);
    h.sent[0].reject(new Error('boom'));
    await flush();
    expect(h.sent.map((p) => p.state)).toEqual([1, 2]);
    h.sent[1].resolve('frame-2');
    await flush();
    expect(h.shown).toEqual(['frame-2']);
  });
});

describe('display gate', () => {
  it('rejects completions older than the newest displayed frame', () => {
    const gate = new FrameGate();
    expect(gate.admit(1)).toBe(true);
    expect(gate.admit(3)).toBe(true);
    // a slow request issued before seq 3 completes late: must not display
    expect(gate.admit(2)).toBe(false);
    expect(gate.admit(3)).toBe(false);
    expect(gate.admit(4)).toBe(true);
  });
});
