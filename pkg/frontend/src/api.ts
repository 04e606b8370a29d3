// Typed client for the annotation service. The base URL is configurable so
// the UI can be served from anywhere (same origin by default).

import type {
  PredictResponse,
  RleMask,
  SampleInfo,
  SessionLog,
  Stroke,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function check(r: Response): Promise<Response> {
  if (!r.ok) {
    let detail = r.statusText;
    try {
      const body = await r.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(r.status, detail);
  }
  return r;
}

export class ApiClient {
  constructor(readonly base: string = "") {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  private async post(path: string, body?: unknown): Promise<Response> {
    return check(
      await fetch(this.url(path), {
        method: "POST",
        headers: body === undefined ? {} : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      }),
    );
  }

  async listSamples(): Promise<SampleInfo[]> {
    const r = await check(await fetch(this.url("/api/samples")));
    return r.json();
  }

  imageUrl(sampleId: string): string {
    return this.url(`/api/samples/${sampleId}/image`);
  }

  async createSession(
    sampleId: string,
    targetClass?: string,
    backend?: string,
  ): Promise<string> {
    const r = await this.post("/api/sessions", {
      sample_id: sampleId,
      target_class: targetClass ?? null,
      backend: backend ?? null,
    });
    const body = await r.json();
    return body.session_id as string;
  }

  async addStroke(sessionId: string, stroke: Stroke): Promise<void> {
    await this.post(`/api/sessions/${sessionId}/strokes`, stroke);
  }

  async predict(sessionId: string): Promise<PredictResponse> {
    const r = await this.post(`/api/sessions/${sessionId}/predict`);
    return r.json();
  }

  async undo(sessionId: string): Promise<void> {
    await this.post(`/api/sessions/${sessionId}/undo`);
  }

  async reset(sessionId: string): Promise<void> {
    await this.post(`/api/sessions/${sessionId}/reset`);
  }

  async deleteSession(sessionId: string): Promise<void> {
    await check(
      await fetch(this.url(`/api/sessions/${sessionId}`), { method: "DELETE" }),
    );
  }

  async sessionLog(sessionId: string): Promise<SessionLog> {
    const r = await check(
      await fetch(this.url(`/api/sessions/${sessionId}/log`)),
    );
    return r.json();
  }

  async replay(
    sampleId: string,
    log: SessionLog["log"],
    targetClass?: string | null,
    backend?: string | null,
  ): Promise<RleMask[]> {
    const r = await this.post("/api/replay", {
      sample_id: sampleId,
      target_class: targetClass ?? null,
      backend: backend ?? null,
      log,
    });
    const body = await r.json();
    return body.masks as RleMask[];
  }
}
