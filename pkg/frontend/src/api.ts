// Typed client for the inference service. Fetch is injectable for tests.

import type { Pose, RenderResponse, SessionDescriptor } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export class StudioApi {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = fetch.bind(globalThis),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) {
      throw new ApiError(res.status, await res.text());
    }
    return (await res.json()) as T;
  }

  healthz(): Promise<{ status: string; checkpoint: string }> {
    return this.request("GET", "/healthz");
  }

  createSession(seed: number, pose: Pose): Promise<SessionDescriptor> {
    return this.request("POST", "/sessions", { seed, pose });
  }

  addAccessory(sessionId: string, seed: number, textureSeed: number): Promise<SessionDescriptor> {
    return this.request("POST", `/sessions/${sessionId}/accessories`, {
      seed,
      texture_seed: textureSeed,
    });
  }

  submitScribble(
    sessionId: string,
    pngBase64: string,
    textureSeed: number,
  ): Promise<SessionDescriptor> {
    return this.request("POST", `/sessions/${sessionId}/scribble`, {
      png_base64: pngBase64,
      texture_seed: textureSeed,
    });
  }

  removeAccessory(sessionId: string, index: number): Promise<SessionDescriptor> {
    return this.request("DELETE", `/sessions/${sessionId}/accessories/${index}`);
  }

  render(sessionId: string, pose?: Pose): Promise<RenderResponse> {
    return this.request("POST", `/sessions/${sessionId}/render`, pose ? { pose } : {});
  }
}
