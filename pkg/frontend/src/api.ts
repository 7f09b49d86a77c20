// Thin typed client over the /v1 JSON API. All dialogue-state mutation goes
// through these calls; the UI itself never touches state directly.

import type {
  Mode,
  RatingRecord,
  SessionInfo,
  Transcript,
  TurnPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number | null,
    public readonly retryable: boolean,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function parseError(resp: Response): Promise<string> {
  try {
    const doc = await resp.json();
    if (typeof doc?.detail === "string") return doc.detail;
  } catch {
    // non-JSON error body; fall through to the status line
  }
  return `${resp.status} ${resp.statusText}`;
}

export class ApiClient {
  constructor(private readonly baseUrl: string) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    let resp: Response;
    try {
      resp = await fetch(this.baseUrl + path, {
        method,
        headers: body === undefined ? {} : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(`service unreachable: ${String(err)}`, null, true);
    }
    if (!resp.ok) {
      // 5xx (including a 502 from the generator backend) is worth retrying;
      // 4xx means the request itself was bad
      throw new ApiError(await parseError(resp), resp.status, resp.status >= 500);
    }
    return (await resp.json()) as T;
  }

  healthz(): Promise<unknown> {
    return this.request("GET", "/v1/healthz");
  }

  createSession(mode: Mode, seed?: number): Promise<SessionInfo> {
    const body: Record<string, unknown> = { mode };
    if (seed !== undefined) body.seed = seed;
    return this.request("POST", "/v1/sessions", body);
  }

  sendUtterance(sessionId: string, utterance: string): Promise<TurnPayload> {
    return this.request("POST", `/v1/sessions/${sessionId}/turns`, {
      utterance,
    });
  }

  submitRating(
    sessionId: string,
    statement: string,
    score: number,
    annotations?: Record<string, unknown>,
  ): Promise<RatingRecord> {
    const body: Record<string, unknown> = { statement, score };
    if (annotations && Object.keys(annotations).length > 0) {
      body.annotations = annotations;
    }
    return this.request("POST", `/v1/sessions/${sessionId}/rating`, body);
  }

  downloadTranscript(sessionId: string): Promise<Transcript> {
    return this.request("GET", `/v1/sessions/${sessionId}/transcript`);
  }
}

/** Service URL: ?api=... query parameter wins, then the build-time default. */
export function resolveBaseUrl(
  search: string,
  fallback = "http://127.0.0.1:8040",
): string {
  const fromQuery = new URLSearchParams(search).get("api");
  return (fromQuery ?? fallback).replace(/\/+$/, "");
}
