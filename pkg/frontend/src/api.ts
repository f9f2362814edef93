/**
 * Typed client for the sketching session API. Every mutation of sketch
 * state goes through this module and nothing else; the UI layers above
 * only read.
 */

import type { Vertex } from "./polygon.js";

export interface SessionParams {
  strokes?: number;
  seed?: number;
  backend?: string;
  canvas?: number;
  maxIters?: number;
  evalInterval?: number;
  sampler?: string;
  freezePrevious?: boolean;
}

export interface RoundOverrides {
  max_iters?: number;
  eval_interval?: number;
}

export type ProgressEvent =
  | { type: "loss"; round: number; iteration: number; clean_loss: number }
  | { type: "preview"; round: number; iteration: number; png_b64: string }
  | { type: "status"; status: string; round?: number; iterations?: number;
      final_loss?: number; error?: string; note?: string };

export interface RoundReport {
  round_id: number;
  region_id: number;
  budget: number;
  iterations: number;
  initial_loss: number;
  final_loss: number;
  converged: boolean;
  skipped: boolean;
  loss_history: [number, number][];
}

export interface SessionReport {
  session_id: string;
  status: string;
  config: Record<string, unknown>;
  strokes_total: number;
  regions: number[];
  rounds: RoundReport[];
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

async function expectJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      detail = ((await resp.json()) as { detail?: string }).detail ?? detail;
    } catch {
      /* body was not JSON */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

/**
 * Split NDJSON text chunks into parsed events. Chunks may cut lines
 * anywhere; carry the final partial line between calls.
 */
export function parseNdjson<T>(buffer: string, chunk: string): { events: T[]; rest: string } {
  const text = buffer + chunk;
  const lines = text.split("\n");
  const rest = lines.pop() ?? "";
  const events: T[] = [];
  for (const line of lines) {
    const trimmed = line.trim();
    if (trimmed.length > 0) events.push(JSON.parse(trimmed) as T);
  }
  return { events, rest };
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: typeof fetch = fetch,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  async createSession(photoPng: Blob | Uint8Array, params: SessionParams = {}): Promise<string> {
    const query = new URLSearchParams();
    if (params.strokes !== undefined) query.set("strokes", String(params.strokes));
    if (params.seed !== undefined) query.set("seed", String(params.seed));
    if (params.backend) query.set("backend", params.backend);
    if (params.canvas !== undefined) query.set("canvas", String(params.canvas));
    if (params.maxIters !== undefined) query.set("max_iters", String(params.maxIters));
    if (params.evalInterval !== undefined) query.set("eval_interval", String(params.evalInterval));
    if (params.sampler) query.set("sampler", params.sampler);
    if (params.freezePrevious) query.set("freeze_previous", "true");
    const qs = query.toString();
    const body = photoPng instanceof Uint8Array
      ? new Blob([photoPng.buffer.slice(0) as ArrayBuffer]) : photoPng;
    const resp = await this.fetchImpl(
      `${this.baseUrl}/sessions${qs ? "?" + qs : ""}`,
      { method: "POST", body, headers: { "Content-Type": "image/png" } },
    );
    const data = await expectJson<{ session_id: string }>(resp);
    return data.session_id;
  }

  async addPolygonRegion(sessionId: string, polygon: Vertex[], label = ""): Promise<number> {
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/regions`, {
      method: "POST",
      body: JSON.stringify({ polygon, label }),
      headers: { "Content-Type": "application/json" },
    });
    const data = await expectJson<{ region_id: number }>(resp);
    return data.region_id;
  }

  async startRound(sessionId: string, regionId: number,
                   overrides?: RoundOverrides): Promise<number> {
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/rounds`, {
      method: "POST",
      body: JSON.stringify({ region_id: regionId, overrides: overrides ?? {} }),
      headers: { "Content-Type": "application/json" },
    });
    const data = await expectJson<{ round_id: number }>(resp);
    return data.round_id;
  }

  async getReport(sessionId: string): Promise<SessionReport> {
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/report`);
    return expectJson<SessionReport>(resp);
  }

  sketchSvgUrl(sessionId: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/sketch.svg`;
  }

  async fetchSketchSvg(sessionId: string): Promise<string> {
    const resp = await this.fetchImpl(this.sketchSvgUrl(sessionId));
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
    return resp.text();
  }

  /**
   * Stream progress events for the running round. The server replays the
   * loss backlog first, then live events, and closes when the round ends.
   */
  async *streamProgress(sessionId: string): AsyncGenerator<ProgressEvent> {
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/progress`);
    if (!resp.ok || resp.body === null) {
      throw new ApiError(resp.status, "progress stream unavailable");
    }
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      const parsed = parseNdjson<ProgressEvent>(buffer, decoder.decode(value, { stream: true }));
      buffer = parsed.rest;
      for (const ev of parsed.events) yield ev;
    }
    const tail = parseNdjson<ProgressEvent>(buffer, "\n");
    for (const ev of tail.events) yield ev;
  }
}
