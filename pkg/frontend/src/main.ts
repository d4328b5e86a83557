// Console wiring: compose panel on the left, ranked results in the middle,
// detail on the right. One search in flight at a time; a new submission
// cancels the pending request.

import { ApiClient, ApiError } from "./api";
import {
  attachImage,
  emptyDraft,
  isValid,
  removeImage,
  setK,
  setText,
  type QueryDraft,
} from "./draft";
import { IMAGE_STYLES, type ImageStyle, type SearchResultItem } from "./types";
import { clearError, renderDetail, renderError, renderLatency, renderResults } from "./view";

const api = new ApiClient("");
let draft: QueryDraft = emptyDraft();
let inflight: AbortController | null = null;

const el = <T extends HTMLElement>(id: string): T => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
};

const banner = el<HTMLElement>("error-banner");
const grid = el<HTMLElement>("results-grid");
const detail = el<HTMLElement>("detail-panel");
const latency = el<HTMLElement>("latency");
const submit = el<HTMLButtonElement>("submit");
const status = el<HTMLElement>("service-status");

function refreshSubmit(): void {
  submit.disabled = !isValid(draft);
}

function onSelect(item: SearchResultItem): void {
  renderDetail(detail, item, api.galleryUrl(item.gallery_id));
}

async function runSearch(): Promise<void> {
  if (!isValid(draft)) return;
  inflight?.abort();
  inflight = new AbortController();
  clearError(banner);
  submit.classList.add("busy");
  const started = performance.now();
  try {
    const response = await api.search(draft, inflight.signal);
    renderResults(grid, response, (id) => api.galleryUrl(id), onSelect);
    renderLatency(latency, performance.now() - started, response.timing_ms);
  } catch (err) {
    if (err instanceof DOMException && err.name === "AbortError") return;
    const message = err instanceof ApiError ? err.detail : String(err);
    renderError(banner, message);
  } finally {
    submit.classList.remove("busy");
  }
}

function wireImageInput(style: ImageStyle): void {
  const input = el<HTMLInputElement>(`file-${style}`);
  const label = el<HTMLElement>(`attached-${style}`);
  input.addEventListener("change", () => {
    const file = input.files?.[0];
    if (!file) return;
    const outcome = attachImage(draft, style, file);
    if (!outcome.ok) {
      renderError(banner, outcome.error);
      input.value = "";
      return;
    }
    clearError(banner);
    draft = outcome.draft;
    label.textContent = file.name;
    refreshSubmit();
  });
  el<HTMLButtonElement>(`clear-${style}`).addEventListener("click", () => {
    draft = removeImage(draft, style);
    input.value = "";
    label.textContent = "";
    refreshSubmit();
  });
}

export async function boot(): Promise<void> {
  try {
    const health = await api.health();
    status.textContent = `service ok · ${health.gallery_size} gallery images · model ${health.fingerprint.slice(0, 12)}`;
  } catch (err) {
    status.textContent = "service unreachable";
    renderError(banner, err instanceof Error ? err.message : String(err));
    return;
  }

  el<HTMLInputElement>("text-input").addEventListener("input", (ev) => {
    draft = setText(draft, (ev.target as HTMLInputElement).value);
    refreshSubmit();
  });
  el<HTMLInputElement>("k-input").addEventListener("change", (ev) => {
    draft = setK(draft, Number((ev.target as HTMLInputElement).value));
    (ev.target as HTMLInputElement).value = String(draft.k);
  });
  for (const style of IMAGE_STYLES) wireImageInput(style);
  submit.addEventListener("click", () => void runSearch());
  refreshSubmit();
}

if (!("__STYLESEARCH_TEST__" in globalThis)) {
  void boot();
}
