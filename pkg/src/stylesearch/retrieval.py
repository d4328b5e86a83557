"""Gallery embedding index, cosine ranking, multi-query fusion, and R@k
evaluation. Scoring is exact brute force; desk-scale galleries are small."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import (
    QUERY_STYLES,
    ManifestRecord,
    StyleTag,
    load_image,
    preprocess,
    resolve_path,
)
from .errors import (
    DegenerateInputError,
    EvaluationError,
    InputShapeError,
)
from .pipeline import RetrievalModel

INDEX_FORMAT_VERSION = 1


@dataclass
class EmbeddingIndex:
    """Ordered gallery ids with unit-normalized embedding rows."""

    ids: list[str]
    matrix: np.ndarray  # (N, d) float32
    fingerprint: str

    def __post_init__(self) -> None:
        if len(self.ids) != self.matrix.shape[0]:
            raise InputShapeError(
                f"id count {len(self.ids)} != row count {self.matrix.shape[0]}"
            )
        if len(set(self.ids)) != len(self.ids):
            raise InputShapeError("gallery ids must be unique")

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def save(self, path: str | Path) -> None:
        np.savez(
            path,
            ids=np.array(self.ids, dtype=object),
            matrix=self.matrix.astype(np.float32),
            fingerprint=np.str_(self.fingerprint),
            format_version=np.int64(INDEX_FORMAT_VERSION),
        )

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingIndex":
        with np.load(path, allow_pickle=True) as z:
            version = int(z["format_version"])
            if version != INDEX_FORMAT_VERSION:
                raise InputShapeError(f"unknown index format version {version}")
            return cls(
                ids=[str(i) for i in z["ids"]],
                matrix=z["matrix"].astype(np.float32),
                fingerprint=str(z["fingerprint"]),
            )


@dataclass
class RankedResult:
    """Top-k gallery ids with non-increasing cosine scores."""

    entries: list[tuple[str, float]]
    query: str = ""


def build_index(
    model: RetrievalModel,
    records: list[ManifestRecord],
    manifest_path: str | Path,
    batch_size: int = 32,
) -> EmbeddingIndex:
    """Encode every distinct gallery image through the full prompt pipeline."""
    seen: dict[str, str] = {}
    for r in records:
        seen.setdefault(r.gallery_id, r.image_path)
    if not seen:
        raise EvaluationError("no gallery items to index")
    ids = sorted(seen)
    cfg = model.config
    rows = []
    for start in range(0, len(ids), batch_size):
        chunk = ids[start : start + batch_size]
        imgs = np.stack(
            [
                preprocess(
                    load_image(resolve_path(manifest_path, seen[gid]), cfg.image_size),
                    cfg.normalize_mean,
                    cfg.normalize_std,
                )
                for gid in chunk
            ]
        )
        rows.append(model.embed_images(torch.from_numpy(imgs)).numpy())
    matrix = np.concatenate(rows).astype(np.float32)
    return EmbeddingIndex(ids=ids, matrix=matrix, fingerprint=model.fingerprint())


def search(query: np.ndarray, index: EmbeddingIndex, k: int) -> RankedResult:
    """Top-k rows by cosine similarity; ties break by ascending gallery id."""
    q = np.asarray(query, dtype=np.float32).reshape(-1)
    if q.shape[0] != index.dim:
        raise InputShapeError(f"query dim {q.shape[0]} != index dim {index.dim}")
    if k < 1:
        raise InputShapeError(f"k must be >= 1, got {k}")
    norm = float(np.linalg.norm(q))
    if norm == 0.0:
        raise DegenerateInputError("cannot search with a zero query vector")
    scores = index.matrix @ (q / norm)
    row_norms = np.linalg.norm(index.matrix, axis=1)
    scores = scores / np.where(row_norms == 0.0, 1.0, row_norms)
    order = np.lexsort((np.array(index.ids), -scores.astype(np.float64)))
    top = order[: min(k, len(index.ids))]
    return RankedResult(entries=[(index.ids[i], float(scores[i])) for i in top])


def fuse_queries(embeddings: list[np.ndarray]) -> np.ndarray:
    """Arithmetic mean of the component embeddings, re-normalized to unit length."""
    if not embeddings:
        raise DegenerateInputError("fusion needs at least one embedding")
    vecs = [np.asarray(e, dtype=np.float64).reshape(-1) for e in embeddings]
    if len({v.shape[0] for v in vecs}) > 1:
        raise InputShapeError("fused embeddings must share one dimension")
    mean = np.stack(vecs).mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0.0:
        raise DegenerateInputError("fused embedding has zero norm")
    return (mean / norm).astype(np.float32)


def recall_at_k(ranked: list[RankedResult], ground_truth: list[str], k: int) -> float:
    """Percentage of queries whose ground truth appears in the top k entries."""
    if len(ranked) != len(ground_truth):
        raise EvaluationError("ranked results and ground truth lengths differ")
    if not ranked:
        raise EvaluationError("no queries to evaluate")
    hits = 0
    for result, truth in zip(ranked, ground_truth):
        ids = [gid for gid, _ in result.entries[:k]]
        if truth in ids:
            hits += 1
    return 100.0 * hits / len(ranked)


@dataclass
class EvalReport:
    recall: dict = field(default_factory=dict)  # style -> {"r@1": .., "r@5": ..}
    fused: dict = field(default_factory=dict)  # combo -> {"r@1": .., "r@5": ..}
    query_counts: dict = field(default_factory=dict)
    fingerprint: str = ""
    split: str = "test"
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "fingerprint": self.fingerprint,
            "fused": self.fused,
            "query_counts": self.query_counts,
            "recall": self.recall,
            "split": self.split,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _embed_query_records(
    model: RetrievalModel,
    records: list[ManifestRecord],
    manifest_path: str | Path,
    batch_size: int = 32,
) -> np.ndarray:
    cfg = model.config
    if records[0].style == StyleTag.TEXT:
        return model.embed_texts([r.text for r in records]).numpy()
    rows = []
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        imgs = np.stack(
            [
                preprocess(
                    load_image(resolve_path(manifest_path, r.query_path), cfg.image_size),
                    cfg.normalize_mean,
                    cfg.normalize_std,
                )
                for r in chunk
            ]
        )
        rows.append(model.embed_images(torch.from_numpy(imgs)).numpy())
    return np.concatenate(rows)


def evaluate(
    model: RetrievalModel,
    index: EmbeddingIndex,
    records: list[ManifestRecord],
    manifest_path: str | Path,
    split: str = "test",
    ks: tuple[int, ...] = (1, 5),
    fused_with_text: bool = True,
) -> EvalReport:
    """Per-style and fused R@k over one manifest split against the index.

    Fused combos pair each image-form style with the text query of the same
    gallery item (mean-and-renormalize fusion) before searching.
    """
    eval_records = [r for r in records if r.split == split]
    known = set(index.ids)
    missing = sorted({r.gallery_id for r in eval_records} - known)
    if missing:
        raise EvaluationError(f"ground truth ids missing from index: {missing}")

    max_k = max(ks)
    report = EvalReport(fingerprint=index.fingerprint, split=split)
    embeddings: dict[StyleTag, dict[str, np.ndarray]] = {}
    for style in StyleTag:
        style_records = [r for r in eval_records if r.style == style]
        if not style_records:
            continue
        embs = _embed_query_records(model, style_records, manifest_path)
        embeddings[style] = {r.gallery_id: embs[i] for i, r in enumerate(style_records)}
        ranked = [search(embs[i], index, max_k) for i in range(len(style_records))]
        truth = [r.gallery_id for r in style_records]
        report.recall[style.value] = {
            f"r@{k}": round(recall_at_k(ranked, truth, k), 4) for k in ks
        }
        report.query_counts[style.value] = len(style_records)

    if fused_with_text and StyleTag.TEXT in embeddings:
        text_embs = embeddings[StyleTag.TEXT]
        for style in (StyleTag.SKETCH, StyleTag.ART, StyleTag.LOWRES):
            if style not in embeddings:
                continue
            shared = sorted(set(text_embs) & set(embeddings[style]))
            if not shared:
                continue
            combo = f"{style.value}+text"
            ranked, truth = [], []
            for gid in shared:
                fused = fuse_queries([embeddings[style][gid], text_embs[gid]])
                ranked.append(search(fused, index, max_k))
                truth.append(gid)
            report.fused[combo] = {
                f"r@{k}": round(recall_at_k(ranked, truth, k), 4) for k in ks
            }
            report.query_counts[combo] = len(shared)
    return report


def export_embeddings(
    model: RetrievalModel,
    records: list[ManifestRecord],
    manifest_path: str | Path,
    out_path: str | Path,
) -> None:
    """Dump embeddings for every record (queries and gallery images) to npz,
    tagged with style/split, for offline projection or visualization."""
    ids, styles, splits, rows = [], [], [], []
    gallery_seen = set()
    for style in QUERY_STYLES:
        style_records = [r for r in records if r.style == style]
        if not style_records:
            continue
        embs = _embed_query_records(model, style_records, manifest_path)
        for i, r in enumerate(style_records):
            ids.append(r.gallery_id)
            styles.append(style.value)
            splits.append(r.split)
            rows.append(embs[i])
    cfg = model.config
    for r in records:
        if r.gallery_id in gallery_seen:
            continue
        gallery_seen.add(r.gallery_id)
        img = preprocess(
            load_image(resolve_path(manifest_path, r.image_path), cfg.image_size),
            cfg.normalize_mean,
            cfg.normalize_std,
        )
        emb = model.embed_images(torch.from_numpy(img[None]))[0].numpy()
        ids.append(r.gallery_id)
        styles.append("image")
        splits.append(r.split)
        rows.append(emb)
    np.savez(
        out_path,
        ids=np.array(ids, dtype=object),
        styles=np.array(styles, dtype=object),
        splits=np.array(splits, dtype=object),
        matrix=np.stack(rows).astype(np.float32),
        fingerprint=np.str_(model.fingerprint()),
    )


def timed_search(query: np.ndarray, index: EmbeddingIndex, k: int) -> tuple[RankedResult, float]:
    start = time.perf_counter()
    result = search(query, index, k)
    return result, (time.perf_counter() - start) * 1000.0
