// Rendering helpers. The results grid is a pure view over SearchResponse:
// tiles appear in response order with scores to three decimals.

import type { SearchResponse, SearchResultItem } from "./types";

export function clear(el: HTMLElement): void {
  while (el.lastChild) el.removeChild(el.lastChild);
}

export function renderError(banner: HTMLElement, message: string): void {
  banner.textContent = message;
  banner.hidden = false;
}

export function clearError(banner: HTMLElement): void {
  banner.textContent = "";
  banner.hidden = true;
}

export function renderLatency(el: HTMLElement, clientMs: number, serverMs: number): void {
  el.textContent = `${clientMs.toFixed(0)} ms round trip (${serverMs.toFixed(1)} ms in service)`;
}

export function renderResults(
  grid: HTMLElement,
  response: SearchResponse,
  galleryUrl: (id: string) => string,
  onSelect: (item: SearchResultItem) => void,
): void {
  clear(grid);
  if (response.results.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "no results";
    grid.appendChild(empty);
    return;
  }
  for (const item of response.results) {
    const tile = document.createElement("figure");
    tile.className = "result-tile";
    const img = document.createElement("img");
    img.src = galleryUrl(item.gallery_id);
    img.alt = item.gallery_id;
    img.loading = "lazy";
    const caption = document.createElement("figcaption");
    caption.textContent = `${item.gallery_id} · ${item.score.toFixed(3)}`;
    tile.append(img, caption);
    tile.addEventListener("click", () => onSelect(item));
    grid.appendChild(tile);
  }
}

export function renderDetail(panel: HTMLElement, item: SearchResultItem, imageUrl: string): void {
  clear(panel);
  const title = document.createElement("h3");
  title.textContent = item.gallery_id;
  const score = document.createElement("p");
  score.textContent = `score ${item.score.toFixed(3)}`;
  const img = document.createElement("img");
  img.className = "detail-image";
  img.src = imageUrl;
  img.alt = item.gallery_id;
  panel.append(title, score, img);
}
