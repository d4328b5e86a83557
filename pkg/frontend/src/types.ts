// Wire types mirroring the retrieval service's response models.

export interface SearchResultItem {
  gallery_id: string;
  score: number;
  thumbnail: string;
}

export interface SearchResponse {
  schema_version: number;
  results: SearchResultItem[];
  components: string[];
  k: number;
  timing_ms: number;
  fingerprint: string;
}

export interface HealthResponse {
  status: string;
  fingerprint: string;
  gallery_size: number;
}

export interface StylesResponse {
  styles: string[];
}

export const IMAGE_STYLES = ["sketch", "art", "lowres", "image"] as const;
export type ImageStyle = (typeof IMAGE_STYLES)[number];
