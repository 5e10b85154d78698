import type { PredictRequest, PredictResponse, PrototypeExport, SkillCatalog } from './types';

declare global {
  interface Window {
    SKILLPROTO_API?: string;
  }
}

export function apiBase(): string {
  if (typeof window !== 'undefined' && window.SKILLPROTO_API) return window.SKILLPROTO_API;
  return 'http://localhost:8000';
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
  }
}

async function getJson<T>(path: string): Promise<T> {
  const resp = await fetch(`${apiBase()}${path}`);
  if (!resp.ok) throw new ApiError(resp.status, `${path} failed (${resp.status})`);
  return (await resp.json()) as T;
}

export function fetchSkills(): Promise<SkillCatalog> {
  return getJson<SkillCatalog>('/skills');
}

export function fetchPrototypes(): Promise<PrototypeExport[]> {
  return getJson<PrototypeExport[]>('/prototypes');
}

export async function postPredict(request: PredictRequest): Promise<PredictResponse> {
  const resp = await fetch(`${apiBase()}/predict`, {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify(request),
  });
  if (!resp.ok) {
    let detail = `predict failed (${resp.status})`;
    try {
      const body = await resp.json();
      if (typeof body.detail === 'string') detail = body.detail;
    } catch {
      // keep the generic message for non-JSON error bodies
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as PredictResponse;
}
