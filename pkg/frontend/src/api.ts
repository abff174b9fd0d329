// Thin client for the guardrails service. The base URL is configurable
// (window.RAILGATE_API_BASE or constructor argument); no guardrail logic
// lives on this side of the wire.

import type { ChatResponse } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, public status: number | null = null) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  async listConfigs(): Promise<string[]> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}/v1/rails/configs`);
    } catch (err) {
      throw new ApiError(`service unreachable: ${String(err)}`);
    }
    if (!response.ok) {
      throw new ApiError(`configs request failed`, response.status);
    }
    const body = (await response.json()) as { configs: string[] };
    return body.configs;
  }

  async sendMessage(
    configId: string,
    message: string,
    sessionId: string | null,
  ): Promise<ChatResponse> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}/v1/chat`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({
          config_id: configId,
          session_id: sessionId ?? undefined,
          message,
          trace: true,
        }),
      });
    } catch (err) {
      throw new ApiError(`service unreachable: ${String(err)}`);
    }
    if (!response.ok) {
      let detail = `chat request failed (${response.status})`;
      try {
        const body = (await response.json()) as { error?: string };
        if (body.error) detail = body.error;
      } catch {
        // keep the generic message
      }
      throw new ApiError(detail, response.status);
    }
    return (await response.json()) as ChatResponse;
  }
}

export function defaultBaseUrl(): string {
  const injected = (globalThis as { RAILGATE_API_BASE?: string }).RAILGATE_API_BASE;
  return injected ?? "http://127.0.0.1:8000";
}
