"""Two-pass training: fit the style space over training grams, then optimize
the prompt projections with a cosine-distance triplet loss.

Anchors are query embeddings (image-form queries run through the prompt-tuned
encoder, text queries through the frozen text tower); positives are the
ground-truth gallery images and negatives are other gallery images drawn from
the anchor's style set. Everything is seeded, so re-runs reproduce the loss
log exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig, TrainConfig
from .data import (
    IMAGE_STYLES,
    ManifestRecord,
    StyleTag,
    load_image,
    load_manifest,
    preprocess,
    resolve_path,
)
from .errors import (
    BatchError,
    DegenerateInputError,
    InsufficientDataError,
    SamplingError,
    TrainingAbort,
)
from .pipeline import RetrievalModel, save_checkpoint
from .backbone import build_vocab
from .style import kmeans_fit

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Triplet:
    anchor: ManifestRecord
    positive: str  # gallery_id
    negative: str  # gallery_id


def cosine_distance(x: np.ndarray | torch.Tensor, y: np.ndarray | torch.Tensor) -> float:
    """``1 - cos(x, y)``; raises on zero vectors."""
    xv = np.asarray(x, dtype=np.float64).reshape(-1)
    yv = np.asarray(y, dtype=np.float64).reshape(-1)
    if xv.shape != yv.shape:
        raise BatchError(f"dimension mismatch: {xv.shape} vs {yv.shape}")
    nx, ny = np.linalg.norm(xv), np.linalg.norm(yv)
    if nx == 0.0 or ny == 0.0:
        raise DegenerateInputError("cosine distance undefined for zero vectors")
    return float(1.0 - np.dot(xv, yv) / (nx * ny))


def triplet_loss(
    anchors: torch.Tensor,
    positives: torch.Tensor,
    negatives: torch.Tensor,
    margin: float,
) -> torch.Tensor:
    """Mean hinge ``max(0, dist(a,p) - dist(a,n) + margin)`` over the batch.

    Inputs are (B, d) embedding batches; rows need not be pre-normalized.
    """
    if not (anchors.shape == positives.shape == negatives.shape) or anchors.ndim != 2:
        raise BatchError(
            f"batch shapes must match: {tuple(anchors.shape)}, "
            f"{tuple(positives.shape)}, {tuple(negatives.shape)}"
        )
    d_pos = 1.0 - torch.nn.functional.cosine_similarity(anchors, positives, dim=1)
    d_neg = 1.0 - torch.nn.functional.cosine_similarity(anchors, negatives, dim=1)
    return torch.clamp(d_pos - d_neg + margin, min=0.0).mean()


def sample_triplet(
    record: ManifestRecord, style_set: list[ManifestRecord], rng: np.random.Generator
) -> Triplet:
    """Uniform negative from the record's style set, excluding the positive."""
    candidates = [r.gallery_id for r in style_set if r.gallery_id != record.gallery_id]
    if not candidates:
        raise SamplingError(
            f"style set for {record.style.value!r} has no negative for {record.gallery_id}"
        )
    negative = candidates[int(rng.integers(len(candidates)))]
    return Triplet(anchor=record, positive=record.gallery_id, negative=negative)


def lr_schedule(step: int, total_steps: int, warmup_steps: int, lr_max: float) -> float:
    """Linear warmup to ``lr_max`` then cosine decay to zero at the last step."""
    if warmup_steps > 0 and step < warmup_steps:
        return lr_max * (step + 1) / warmup_steps
    span = max(total_steps - warmup_steps, 1)
    progress = (step + 1 - warmup_steps) / span
    return lr_max * 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))


class AssetStore:
    """Cached frozen per-image assets (token sequences + flattened grams).

    Tokens and grams never change during training, so they are computed once
    per image path and reused by every epoch and by index building.
    """

    def __init__(self, model: RetrievalModel, manifest_path: str | Path, batch_size: int = 32):
        self.model = model
        self.manifest_path = Path(manifest_path)
        self.batch_size = batch_size
        self._row: dict[str, int] = {}
        self.tokens: torch.Tensor | None = None
        self.grams: np.ndarray | None = None

    def add_paths(self, rel_paths: list[str]) -> None:
        new = [p for p in dict.fromkeys(rel_paths) if p not in self._row]
        if not new:
            return
        cfg = self.model.config
        token_chunks, gram_chunks = [], []
        for start in range(0, len(new), self.batch_size):
            chunk = new[start : start + self.batch_size]
            imgs = np.stack(
                [
                    preprocess(
                        load_image(resolve_path(self.manifest_path, p), cfg.image_size),
                        cfg.normalize_mean,
                        cfg.normalize_std,
                    )
                    for p in chunk
                ]
            )
            tokens, grams = self.model.compute_assets(torch.from_numpy(imgs))
            token_chunks.append(tokens)
            gram_chunks.append(grams)
        offset = len(self._row)
        for i, p in enumerate(new):
            self._row[p] = offset + i
        new_tokens = torch.cat(token_chunks)
        new_grams = np.concatenate(gram_chunks)
        self.tokens = new_tokens if self.tokens is None else torch.cat([self.tokens, new_tokens])
        self.grams = new_grams if self.grams is None else np.concatenate([self.grams, new_grams])

    def rows(self, rel_paths: list[str]) -> tuple[torch.Tensor, np.ndarray]:
        idx = [self._row[p] for p in rel_paths]
        assert self.tokens is not None and self.grams is not None
        return self.tokens[idx], self.grams[idx]

    def grams_for(self, rel_paths: list[str]) -> np.ndarray:
        assert self.grams is not None
        return self.grams[[self._row[p] for p in rel_paths]]


@dataclass
class TrainResult:
    checkpoint_path: Path
    metrics_path: Path
    style_space_path: Path
    epoch_losses: list[float] = field(default_factory=list)
    model: RetrievalModel | None = None


def train_two_pass(
    manifest_path: str | Path,
    model_config: ModelConfig,
    train_config: TrainConfig,
    out_dir: str | Path,
    snapshot_epochs: tuple[int, ...] = (),
) -> TrainResult:
    """Run both passes over the training split and write checkpoint + metrics.

    ``snapshot_epochs`` additionally keeps ``checkpoint_epoch{N}.pt`` files at
    those epochs, for protocols that average evaluations over training depths.
    """
    manifest_path = Path(manifest_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = load_manifest(manifest_path)
    train_records = [r for r in records if r.split == "train"]
    if not train_records:
        raise InsufficientDataError("manifest has no training records")

    vocab = build_vocab([r.text for r in records if r.text])
    model = RetrievalModel(model_config, vocab).eval_mode()

    gallery_paths = list(dict.fromkeys(r.image_path for r in train_records))
    query_paths = [r.query_path for r in train_records if r.query_path]
    store = AssetStore(model, manifest_path)
    store.add_paths(gallery_paths + query_paths)

    # Pass one: cluster the grams of every training image asset.
    logger.info("pass 1: fitting style space over %d assets", len(gallery_paths) + len(query_paths))
    train_grams = store.grams_for(gallery_paths + query_paths)
    model.style_space = kmeans_fit(
        train_grams,
        k=train_config.style_bases,
        seed=train_config.seed,
        max_iter=train_config.kmeans_max_iter,
        tol=train_config.kmeans_tol,
    )
    style_space_path = out / "style_space.npz"
    model.style_space.save(style_space_path)
    checkpoint_path = out / "checkpoint.pt"
    save_checkpoint(model, checkpoint_path, train_config, epoch=0)

    # Pass two: triplet-loss optimization of the prompt projections.
    queries = list(train_records)
    by_style: dict[StyleTag, list[ManifestRecord]] = {}
    for r in queries:
        by_style.setdefault(r.style, []).append(r)
    gallery_path_of = {r.gallery_id: r.image_path for r in train_records}
    text_cache: dict[str, torch.Tensor] = {}
    unique_texts = list(dict.fromkeys(r.text for r in queries if r.text))
    if unique_texts:
        embs = model.embed_texts(unique_texts)
        text_cache = {t: embs[i] for i, t in enumerate(unique_texts)}

    rng = np.random.default_rng(train_config.seed)
    steps_per_epoch = math.ceil(len(queries) / train_config.batch_size)
    total_steps = train_config.epochs * steps_per_epoch
    warmup_steps = train_config.warmup_epochs * steps_per_epoch
    optimizer = torch.optim.AdamW(
        model.trainable_parameters(),
        lr=train_config.learning_rate,
        weight_decay=train_config.weight_decay,
    )

    metrics_path = out / "metrics.csv"
    epoch_losses: list[float] = []
    step = 0
    with metrics_path.open("w") as metrics:
        metrics.write("epoch,step,loss,lr\n")
        for epoch in range(1, train_config.epochs + 1):
            order = rng.permutation(len(queries))
            losses = []
            for start in range(0, len(queries), train_config.batch_size):
                batch = [queries[i] for i in order[start : start + train_config.batch_size]]
                triplets = [sample_triplet(r, by_style[r.style], rng) for r in batch]

                image_anchor_paths = [t.anchor.query_path for t in triplets if t.anchor.query_path]
                pos_paths = [gallery_path_of[t.positive] for t in triplets]
                neg_paths = [gallery_path_of[t.negative] for t in triplets]
                stacked = image_anchor_paths + pos_paths + neg_paths
                tokens, grams = store.rows(stacked)
                emb = model.embed_from_assets(tokens, grams)

                n_img = len(image_anchor_paths)
                img_iter = iter(range(n_img))
                anchor_rows = [
                    emb[next(img_iter)] if t.anchor.query_path else text_cache[t.anchor.text]
                    for t in triplets
                ]
                anchors = torch.stack(anchor_rows)
                # gallery targets are held fixed per step: queries are pulled
                # toward them, which keeps the gallery geometry from being
                # scrambled by the anchors' common-mode push/pull
                positives = emb[n_img : n_img + len(triplets)].detach()
                negatives = emb[n_img + len(triplets) :].detach()

                loss = triplet_loss(anchors, positives, negatives, train_config.margin)
                if not torch.isfinite(loss):
                    raise TrainingAbort(
                        f"non-finite loss at epoch {epoch} step {step}; "
                        f"last good checkpoint: {checkpoint_path}"
                    )
                lr = lr_schedule(step, total_steps, warmup_steps, train_config.learning_rate)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()

                loss_value = float(loss.detach())
                losses.append(loss_value)
                metrics.write(f"{epoch},{step},{loss_value:.8f},{lr:.6e}\n")
                step += 1
            epoch_mean = float(np.mean(losses))
            epoch_losses.append(epoch_mean)
            logger.info("epoch %d/%d mean loss %.6f", epoch, train_config.epochs, epoch_mean)
            save_checkpoint(model, checkpoint_path, train_config, epoch=epoch)
            if epoch in snapshot_epochs:
                save_checkpoint(model, out / f"checkpoint_epoch{epoch}.pt", train_config, epoch=epoch)

    return TrainResult(
        checkpoint_path=checkpoint_path,
        metrics_path=metrics_path,
        style_space_path=style_space_path,
        epoch_losses=epoch_losses,
        model=model,
    )


def fit_style_space_only(
    manifest_path: str | Path,
    model_config: ModelConfig,
    train_config: TrainConfig,
    out_path: str | Path,
):
    """Standalone pass one: fit and persist the style space for a manifest."""
    manifest_path = Path(manifest_path)
    records = load_manifest(manifest_path)
    train_records = [r for r in records if r.split == "train"]
    if not train_records:
        raise InsufficientDataError("manifest has no training records")
    vocab = build_vocab([r.text for r in records if r.text])
    model = RetrievalModel(model_config, vocab).eval_mode()
    paths = list(dict.fromkeys(r.image_path for r in train_records))
    paths += [r.query_path for r in train_records if r.query_path]
    store = AssetStore(model, manifest_path)
    store.add_paths(paths)
    space = kmeans_fit(
        store.grams_for(paths),
        k=train_config.style_bases,
        seed=train_config.seed,
        max_iter=train_config.kmeans_max_iter,
        tol=train_config.kmeans_tol,
    )
    space.save(out_path)
    return space
