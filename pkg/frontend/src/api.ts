/** Thin typed client over the annotation service HTTP API. */

import type { JudgmentPayload, NextTaskResponse, SummaryResponse } from "./types.js";

export type ApiErrorKind = "network" | "rejected";

export class ApiError extends Error {
  readonly kind: ApiErrorKind;
  readonly status?: number;
  readonly errorName?: string;

  constructor(kind: ApiErrorKind, message: string, status?: number, errorName?: string) {
    super(message);
    this.kind = kind;
    this.status = status;
    this.errorName = errorName;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl = "", fetchFn: FetchLike = (...args) => fetch(...args)) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError("network", `service unreachable: ${String(err)}`);
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      // non-JSON error bodies fall through with a generic message
    }
    if (!response.ok) {
      const errorName =
        body && typeof body === "object" && "error" in body
          ? String((body as { error: unknown }).error)
          : undefined;
      const detail =
        body && typeof body === "object" && "detail" in body
          ? String((body as { detail: unknown }).detail)
          : response.statusText;
      throw new ApiError("rejected", detail, response.status, errorName);
    }
    return body as T;
  }

  nextTask(evaluatorId: string): Promise<NextTaskResponse> {
    const query = new URLSearchParams({ evaluator: evaluatorId });
    return this.request<NextTaskResponse>(`/api/tasks?${query.toString()}`);
  }

  submitJudgment(payload: JudgmentPayload): Promise<{ ok: boolean }> {
    return this.request<{ ok: boolean }>("/api/judgments", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  summary(): Promise<SummaryResponse> {
    return this.request<SummaryResponse>("/api/summary");
  }
}
