// Session state machine, DOM-free so it can run under tests.
//
// Strokes buffer locally until predict; the overlay always reflects the
// latest server mask (the UI never mutates masks), and only one predict is
// in flight at a time.

import type { ApiClient } from "./api.js";
import type {
  Channel,
  PredictResponse,
  RleMask,
  SampleInfo,
  SessionLog,
  Stroke,
} from "./types.js";

export interface UiState {
  sample: SampleInfo | null;
  targetClass: string | null;
  sessionId: string | null;
  round: number; // completed predict rounds
  busy: boolean;
  channel: Channel;
  brushWidth: number;
  overlayOpacity: number;
  buffer: Stroke[];
  mask: RleMask | null;
  diceHistory: number[]; // one entry per round when the server knows GT
}

export type StateListener = (state: UiState) => void;
export type ErrorListener = (message: string) => void;

function freshState(): UiState {
  return {
    sample: null,
    targetClass: null,
    sessionId: null,
    round: 0,
    busy: false,
    channel: "pos",
    brushWidth: 3,
    overlayOpacity: 0.45,
    buffer: [],
    mask: null,
    diceHistory: [],
  };
}

export class SessionController {
  readonly state: UiState = freshState();
  private stateListeners: StateListener[] = [];
  private errorListeners: ErrorListener[] = [];

  constructor(private api: ApiClient) {}

  onState(fn: StateListener): void {
    this.stateListeners.push(fn);
  }

  onError(fn: ErrorListener): void {
    this.errorListeners.push(fn);
  }

  private notify(): void {
    for (const fn of this.stateListeners) fn(this.state);
  }

  private fail(e: unknown): void {
    const message = e instanceof Error ? e.message : String(e);
    for (const fn of this.errorListeners) fn(message);
  }

  async open(sample: SampleInfo, targetClass: string | null): Promise<void> {
    const old = this.state.sessionId;
    Object.assign(this.state, freshState(), {
      channel: this.state.channel,
      brushWidth: this.state.brushWidth,
      overlayOpacity: this.state.overlayOpacity,
    });
    this.state.sample = sample;
    this.state.targetClass = targetClass;
    try {
      this.state.sessionId = await this.api.createSession(
        sample.id,
        targetClass ?? undefined,
      );
      if (old) this.api.deleteSession(old).catch(() => undefined);
    } catch (e) {
      this.fail(e);
    }
    this.notify();
  }

  setChannel(c: Channel): void {
    this.state.channel = c;
    this.notify();
  }

  setBrushWidth(w: number): void {
    this.state.brushWidth = Math.max(1, Math.round(w));
    this.notify();
  }

  setOverlayOpacity(o: number): void {
    this.state.overlayOpacity = Math.min(Math.max(o, 0), 1);
    this.notify();
  }

  /** Buffer a finished stroke (already in image coordinates). */
  addStroke(polyline: [number, number][]): Stroke | null {
    if (!this.state.sessionId || polyline.length === 0) return null;
    const stroke: Stroke = {
      channel: this.state.channel,
      polyline,
      width: this.state.brushWidth,
    };
    this.state.buffer.push(stroke);
    this.notify();
    return stroke;
  }

  /** Eraser: drop the most recent un-submitted stroke. */
  eraseLastStroke(): void {
    this.state.buffer.pop();
    this.notify();
  }

  /** Submit buffered strokes and run one refinement round. */
  async predict(): Promise<PredictResponse | null> {
    const sid = this.state.sessionId;
    if (!sid) return null;
    if (this.state.busy) {
      throw new Error("a prediction is already in flight");
    }
    this.state.busy = true;
    this.notify();
    try {
      for (const stroke of this.state.buffer) {
        await this.api.addStroke(sid, stroke);
      }
      const response = await this.api.predict(sid);
      this.state.buffer = [];
      this.state.round = response.round + 1;
      this.state.mask = response.mask;
      if (response.dice !== undefined) {
        this.state.diceHistory.push(response.dice);
      }
      return response;
    } catch (e) {
      this.fail(e);
      return null;
    } finally {
      this.state.busy = false;
      this.notify();
    }
  }

  /** Drop everything drawn since the last predict (local and server side). */
  async undo(): Promise<void> {
    this.state.buffer = [];
    const sid = this.state.sessionId;
    if (sid) {
      try {
        await this.api.undo(sid);
      } catch (e) {
        this.fail(e);
      }
    }
    this.notify();
  }

  /** Back to round 0 with an empty overlay. */
  async reset(): Promise<void> {
    const sid = this.state.sessionId;
    if (!sid) return;
    try {
      await this.api.reset(sid);
      this.state.round = 0;
      this.state.buffer = [];
      this.state.mask = null;
      this.state.diceHistory = [];
    } catch (e) {
      this.fail(e);
    }
    this.notify();
  }

  /** Stroke log for download / server-side replay. */
  async exportLog(): Promise<SessionLog | null> {
    const sid = this.state.sessionId;
    if (!sid) return null;
    try {
      return await this.api.sessionLog(sid);
    } catch (e) {
      this.fail(e);
      return null;
    }
  }
}
