/** Thin REST client for the generation service. All model math stays server-side. */

import type { EditOp, HealthInfo, SessionRecord } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public errorName: string,
    detail: string,
  ) {
    super(`${errorName}: ${detail}`);
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(path, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    throw new ApiError(resp.status, body.error ?? "HttpError", body.detail ?? resp.statusText);
  }
  return body as T;
}

export function getHealth(): Promise<HealthInfo> {
  return request("/api/health");
}

export function generateSession(
  music: string,
  steps: number,
  seed: number,
): Promise<SessionRecord> {
  return request("/api/generate", {
    method: "POST",
    body: JSON.stringify({ music, steps, seed }),
  });
}

export function getSession(id: string): Promise<SessionRecord> {
  return request(`/api/session/${id}`);
}

export function editSession(id: string, ops: EditOp[]): Promise<SessionRecord> {
  return request(`/api/session/${id}/edit`, {
    method: "POST",
    body: JSON.stringify({ ops }),
  });
}

export function getCodebooks(): Promise<{ top: { size: number }; bottom: { size: number } }> {
  return request("/api/codebooks");
}
