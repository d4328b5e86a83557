// Query draft state: which components the user has attached and whether the
// draft is submittable. Pure functions so the rules are unit-testable.

import { IMAGE_STYLES, type ImageStyle } from "./types";

export const MAX_PART_BYTES = 5 * 1024 * 1024;
export const MIN_K = 1;
export const MAX_K = 100;

export interface QueryDraft {
  text: string;
  images: Partial<Record<ImageStyle, File>>;
  k: number;
}

export type AttachResult = { ok: true; draft: QueryDraft } | { ok: false; error: string };

export function emptyDraft(k = 10): QueryDraft {
  return { text: "", images: {}, k };
}

export function setText(draft: QueryDraft, text: string): QueryDraft {
  return { ...draft, text };
}

export function setK(draft: QueryDraft, k: number): QueryDraft {
  const clamped = Math.min(MAX_K, Math.max(MIN_K, Math.round(k) || MIN_K));
  return { ...draft, k: clamped };
}

export function attachImage(draft: QueryDraft, style: ImageStyle, file: File): AttachResult {
  if (!IMAGE_STYLES.includes(style)) {
    return { ok: false, error: `unknown style ${style}` };
  }
  if (file.size > MAX_PART_BYTES) {
    const mb = (MAX_PART_BYTES / (1024 * 1024)).toFixed(0);
    return { ok: false, error: `${file.name} exceeds the ${mb} MB upload limit` };
  }
  return { ok: true, draft: { ...draft, images: { ...draft.images, [style]: file } } };
}

export function removeImage(draft: QueryDraft, style: ImageStyle): QueryDraft {
  const images = { ...draft.images };
  delete images[style];
  return { ...draft, images };
}

export function components(draft: QueryDraft): string[] {
  const parts: string[] = [];
  if (draft.text.trim().length > 0) parts.push("text");
  for (const style of IMAGE_STYLES) {
    if (draft.images[style]) parts.push(style);
  }
  return parts;
}

export function isValid(draft: QueryDraft): boolean {
  return components(draft).length > 0;
}

/** Multipart body: one part per attached component plus the k field. */
export function buildFormData(draft: QueryDraft): FormData {
  const form = new FormData();
  const text = draft.text.trim();
  if (text.length > 0) form.set("text", text);
  for (const style of IMAGE_STYLES) {
    const file = draft.images[style];
    if (file) form.set(style, file);
  }
  form.set("k", String(draft.k));
  return form;
}
