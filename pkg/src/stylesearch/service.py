"""HTTP retrieval service.

Endpoints:
  GET  /health        service status and model fingerprint
  GET  /styles        available style tags
  GET  /gallery/{id}  gallery image bytes (PNG)
  POST /search        multipart query: optional ``text`` and ``k`` fields plus
                      style-tagged image files (sketch/art/lowres/image)

The service never mutates checkpoint or index state; responses are
deterministic for a given (request, fingerprint).
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import FileResponse
from PIL import Image
from pydantic import BaseModel

from .engine import IMAGE_QUERY_TAGS, QueryEngine
from .errors import StyleSearchError

RESPONSE_SCHEMA_VERSION = 1
DEFAULT_MAX_PART_BYTES = 5 * 1024 * 1024


class HealthResponse(BaseModel):
    status: str
    fingerprint: str
    gallery_size: int


class StylesResponse(BaseModel):
    styles: list[str]


class SearchResultItem(BaseModel):
    gallery_id: str
    score: float
    thumbnail: str


class SearchResponse(BaseModel):
    schema_version: int = RESPONSE_SCHEMA_VERSION
    results: list[SearchResultItem]
    components: list[str]
    k: int
    timing_ms: float
    fingerprint: str


def create_app(
    checkpoint_path: str | Path,
    index_path: str | Path,
    manifest_path: str | Path,
    max_part_bytes: int = DEFAULT_MAX_PART_BYTES,
) -> FastAPI:
    engine = QueryEngine.load(checkpoint_path, index_path, manifest_path)
    return build_app(engine, max_part_bytes=max_part_bytes)


def build_app(engine: QueryEngine, max_part_bytes: int = DEFAULT_MAX_PART_BYTES) -> FastAPI:
    app = FastAPI(title="stylesearch", version="0.1.0")
    app.state.engine = engine

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(
            status="ok", fingerprint=engine.fingerprint, gallery_size=len(engine.index.ids)
        )

    @app.get("/styles", response_model=StylesResponse)
    def styles() -> StylesResponse:
        return StylesResponse(styles=engine.available_styles())

    @app.get("/gallery/{gallery_id}")
    def gallery(gallery_id: str) -> FileResponse:
        path = engine.gallery_image_path(gallery_id)
        if path is None or not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown gallery id {gallery_id!r}")
        return FileResponse(path, media_type="image/png")

    @app.post("/search", response_model=SearchResponse)
    async def run_search(request: Request) -> SearchResponse:
        try:
            form = await request.form()
        except Exception as exc:
            raise HTTPException(status_code=400, detail=f"malformed multipart body: {exc}")

        known = {"text", "k", *IMAGE_QUERY_TAGS}
        unknown = sorted(set(form.keys()) - known)
        if unknown:
            raise HTTPException(status_code=400, detail=f"unknown form fields: {unknown}")

        raw_k = form.get("k", "10")
        try:
            k = int(raw_k)
        except (TypeError, ValueError):
            raise HTTPException(status_code=400, detail=f"field 'k' must be an integer, got {raw_k!r}")
        if not 1 <= k <= 100:
            raise HTTPException(status_code=400, detail=f"field 'k' must be in [1, 100], got {k}")

        text = form.get("text")
        if text is not None and not isinstance(text, str):
            raise HTTPException(status_code=400, detail="field 'text' must be a plain form field")
        text = (text or "").strip() or None

        images: list[tuple[str, np.ndarray]] = []
        for tag in IMAGE_QUERY_TAGS:
            part = form.get(tag)
            if part is None:
                continue
            if isinstance(part, str):
                raise HTTPException(status_code=400, detail=f"field {tag!r} must be a file part")
            data = await part.read()
            if len(data) > max_part_bytes:
                raise HTTPException(
                    status_code=400,
                    detail=f"file part {tag!r} exceeds {max_part_bytes} bytes",
                )
            try:
                image = np.array(Image.open(io.BytesIO(data)).convert("RGB"))
            except Exception:
                raise HTTPException(status_code=400, detail=f"file part {tag!r} is not a decodable image")
            images.append((tag, image))

        if text is None and not images:
            raise HTTPException(status_code=400, detail="query must contain at least one component")

        try:
            outcome = engine.search(text, images, k)
        except StyleSearchError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

        return SearchResponse(
            results=[
                SearchResultItem(gallery_id=gid, score=score, thumbnail=f"/gallery/{gid}")
                for gid, score in outcome.result.entries
            ],
            components=outcome.components,
            k=k,
            timing_ms=round(outcome.timing_ms, 3),
            fingerprint=engine.fingerprint,
        )

    return app
