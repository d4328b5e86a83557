// Thin typed client over the retrieval service. The console does no ranking
// of its own; everything it shows comes from these responses.

import { buildFormData, type QueryDraft } from "./draft";
import type { HealthResponse, SearchResponse, StylesResponse } from "./types";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function errorDetail(res: Response): Promise<string> {
  try {
    const body = await res.json();
    if (typeof body?.detail === "string") return body.detail;
    return JSON.stringify(body);
  } catch {
    return res.statusText || "request failed";
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetcher: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const res = await this.fetcher(`${this.baseUrl}${path}`);
    if (!res.ok) throw new ApiError(res.status, await errorDetail(res));
    return (await res.json()) as T;
  }

  health(): Promise<HealthResponse> {
    return this.get<HealthResponse>("/health");
  }

  styles(): Promise<StylesResponse> {
    return this.get<StylesResponse>("/styles");
  }

  galleryUrl(galleryId: string): string {
    return `${this.baseUrl}/gallery/${encodeURIComponent(galleryId)}`;
  }

  async search(draft: QueryDraft, signal?: AbortSignal): Promise<SearchResponse> {
    const res = await this.fetcher(`${this.baseUrl}/search`, {
      method: "POST",
      body: buildFormData(draft),
      signal,
    });
    if (!res.ok) throw new ApiError(res.status, await errorDetail(res));
    return (await res.json()) as SearchResponse;
  }
}
