// Render-request scheduling. The service renders on the CPU, so frames can
// lag behind the camera; the loop keeps at most one request in flight and
// coalesces everything that arrives meanwhile into a single latest state.

/**
 * Monotonic display gate: a frame may only be shown if no newer frame has
 * been shown already. Completions that arrive out of order are dropped.
 */
export class FrameGate {
  private displayed = 0;

  admit(seq: number): boolean {
    if (seq <= this.displayed) {
      return false;
    }
    this.displayed = seq;
    return true;
  }
}

export class FrameLoop<S, F> {
  private pending: S | null = null;
  private inFlight = false;
  private seq = 0;
  private gate = new FrameGate();

  constructor(
    private send: (state: S) => Promise<F>,
    private show: (frame: F, state: S) => void,
    private fail: (err: unknown) => void = () => undefined,
  ) {}

  /** Schedule a frame for this state, replacing any not-yet-sent one. */
  request(state: S): void {
    this.pending = state;
    this.pump();
  }

  get busy(): boolean {
    return this.inFlight;
  }

  private pump(): void {
    if (this.inFlight || this.pending === null) {
      return;
    }
    const state = this.pending;
    this.pending = null;
    this.inFlight = true;
    const seq = ++this.seq;
    this.send(state)
      .then(
        (frame) => {
          if (this.gate.admit(seq)) {
            this.show(frame, state);
          }
        },
        (err) => this.fail(err),
      )
      .finally(() => {
        this.inFlight = false;
        this.pump();
      });
  }
}
