import { describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api";
import { attachImage, emptyDraft, setText } from "../src/draft";
import type { SearchResponse } from "../src/types";

const RESPONSE: SearchResponse = {
  schema_version: 1,
  results: [
    { gallery_id: "g0002", score: 0.91, thumbnail: "/gallery/g0002" },
    { gallery_id: "g0001", score: 0.88, thumbnail: "/gallery/g0001" },
  ],
  components: ["text"],
  k: 10,
  timing_ms: 12.5,
  fingerprint: "abc123",
};

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

describe("api client", () => {
  it("health hits /health on the configured base url", async () => {
    const fetcher = vi.fn(async () => jsonResponse({ status: "ok", fingerprint: "f", gallery_size: 3 }));
    const client = new ApiClient("http://svc:9000", fetcher as unknown as typeof fetch);
    const health = await client.health();
    expect(fetcher).toHaveBeenCalledWith("http://svc:9000/health");
    expect(health.gallery_size).toBe(3);
  });

  it("search posts multipart and preserves result order", async () => {
    const fetcher = vi.fn(async (_url: string, init?: RequestInit) => {
      expect(init?.method).toBe("POST");
      expect(init?.body).toBeInstanceOf(FormData);
      const form = init?.body as FormData;
      expect([...form.keys()].sort()).toEqual(["k", "sketch", "text"]);
      return jsonResponse(RESPONSE);
    });
    const client = new ApiClient("", fetcher as unknown as typeof fetch);
    let draft = setText(emptyDraft(), "a red circle");
    const attached = attachImage(draft, "sketch", new File([new Uint8Array(8)], "s.png"));
    if (!attached.ok) throw new Error("attach failed");
    const response = await client.search(attached.draft);
    expect(response.results.map((r) => r.gallery_id)).toEqual(["g0002", "g0001"]);
  });

  it("surfaces server diagnostics on 4xx", async () => {
    const fetcher = vi.fn(async () => jsonResponse({ detail: "query must contain at least one component" }, 400));
    const client = new ApiClient("", fetcher as unknown as typeof fetch);
    await expect(client.search(setText(emptyDraft(), "x"))).rejects.toThrowError(ApiError);
    await client.search(setText(emptyDraft(), "x")).catch((err: ApiError) => {
      expect(err.status).toBe(400);
      expect(err.detail).toContain("at least one component");
    });
  });

  it("passes the abort signal through", async () => {
    const fetcher = vi.fn(async (_url: string, init?: RequestInit) => {
      expect(init?.signal).toBeInstanceOf(AbortSignal);
      return jsonResponse(RESPONSE);
    });
    const client = new ApiClient("", fetcher as unknown as typeof fetch);
    const controller = new AbortController();
    await client.search(setText(emptyDraft(), "x"), controller.signal);
    expect(fetcher).toHaveBeenCalledOnce();
  });

  it("builds gallery image urls", () => {
    const client = new ApiClient("http://svc:9000");
    expect(client.galleryUrl("g0004")).toBe("http://svc:9000/gallery/g0004");
  });
});
