"""Query engine shared by the CLI and the HTTP service.

Both front ends call the same embed-fuse-search path, so their rankings are
identical by construction. The engine is read-only after construction and
holds no RNG state.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .data import StyleTag, load_manifest, resolve_path, preprocess
from .errors import DegenerateInputError, InputShapeError
from .pipeline import RetrievalModel, load_checkpoint
from .retrieval import EmbeddingIndex, RankedResult, fuse_queries, search

IMAGE_QUERY_TAGS = ("sketch", "art", "lowres", "image")


@dataclass
class SearchOutcome:
    result: RankedResult
    components: list[str]
    timing_ms: float


class QueryEngine:
    def __init__(
        self,
        model: RetrievalModel,
        index: EmbeddingIndex,
        gallery_paths: dict[str, Path] | None = None,
    ):
        self.model = model
        self.index = index
        self.gallery_paths = gallery_paths or {}

    @classmethod
    def load(
        cls,
        checkpoint_path: str | Path,
        index_path: str | Path,
        manifest_path: str | Path | None = None,
    ) -> "QueryEngine":
        model, _, _ = load_checkpoint(checkpoint_path)
        index = EmbeddingIndex.load(index_path)
        gallery: dict[str, Path] = {}
        if manifest_path is not None:
            for r in load_manifest(manifest_path):
                gallery.setdefault(r.gallery_id, resolve_path(manifest_path, r.image_path))
        return cls(model, index, gallery)

    @property
    def fingerprint(self) -> str:
        return self.index.fingerprint

    def embed_image_array(self, image: np.ndarray) -> np.ndarray:
        """Embed one uint8 HxWx3 image, resizing to the model input if needed."""
        if image.ndim != 3 or image.shape[2] != 3:
            raise InputShapeError(f"expected HxWx3 RGB image, got shape {image.shape}")
        size = self.model.config.image_size
        if image.shape[:2] != (size, size):
            image = np.array(Image.fromarray(image).resize((size, size), Image.BILINEAR))
        x = preprocess(image, self.model.config.normalize_mean, self.model.config.normalize_std)
        return self.model.embed_images(torch.from_numpy(x[None]))[0].numpy()

    def embed_query(
        self, text: str | None, images: list[tuple[str, np.ndarray]]
    ) -> tuple[np.ndarray, list[str]]:
        """Fused embedding over all supplied components (text and tagged images)."""
        parts: list[np.ndarray] = []
        labels: list[str] = []
        if text:
            parts.append(self.model.embed_texts([text])[0].numpy())
            labels.append("text")
        for tag, image in images:
            if tag not in IMAGE_QUERY_TAGS:
                raise InputShapeError(f"unknown image query tag {tag!r}")
            parts.append(self.embed_image_array(image))
            labels.append(tag)
        if not parts:
            raise DegenerateInputError("query must contain at least one component")
        return fuse_queries(parts), labels

    def search(
        self, text: str | None, images: list[tuple[str, np.ndarray]], k: int
    ) -> SearchOutcome:
        start = time.perf_counter()
        fused, labels = self.embed_query(text, images)
        result = search(fused, self.index, k)
        elapsed = (time.perf_counter() - start) * 1000.0
        result.query = "+".join(labels)
        return SearchOutcome(result=result, components=labels, timing_ms=elapsed)

    def gallery_image_path(self, gallery_id: str) -> Path | None:
        return self.gallery_paths.get(gallery_id)

    def available_styles(self) -> list[str]:
        return [s.value for s in StyleTag]
