"""Assembly of the full retrieval model and its checkpoint format.

The checkpoint stores every frozen tower, the trainable prompt generator, the
fitted style space, the vocabulary, and a config echo. Fingerprints hash the
parameter values (not the file bytes) so re-runs with identical seeds produce
identical fingerprints.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .backbone import ConvExtractor, PatchEmbed, TextEncoder, freeze, parameter_checksum
from .config import (
    ModelConfig,
    TrainConfig,
    model_config_from_dict,
    train_config_from_dict,
)
from .encoder import PromptGenerator, PromptTunedEncoder
from .errors import CheckpointError, InputShapeError
from .style import StyleSpace, gram_matrix, style_features_batch, FeatureMap

CHECKPOINT_FORMAT_VERSION = 1


class RetrievalModel:
    """All towers wired together; only the prompt generator is trainable."""

    def __init__(self, config: ModelConfig, vocab: list[str]):
        self.config = config
        prompt_config = config.prompt.resolve(config.depth)
        torch.manual_seed(config.init_seed)
        self.conv = freeze(ConvExtractor(config))
        self.patch = freeze(PatchEmbed(config))
        self.encoder = freeze(PromptTunedEncoder(config))
        self.text = freeze(TextEncoder(vocab, config.embed_dim))
        self.prompt_gen = PromptGenerator(
            gram_dim=config.gram_dim,
            style_dim=config.gram_dim,
            depth=config.depth,
            embed_dim=config.embed_dim,
            config=prompt_config,
        )
        self.prompt_config = prompt_config
        self.style_space: StyleSpace | None = None

    # -- composition ---------------------------------------------------

    def modules(self) -> dict[str, torch.nn.Module]:
        return {
            "conv": self.conv,
            "patch": self.patch,
            "encoder": self.encoder,
            "text": self.text,
            "prompt_gen": self.prompt_gen,
        }

    def backbone_checksums(self) -> dict[str, str]:
        """Parameter checksums of every frozen tower."""
        return {
            name: parameter_checksum(module)
            for name, module in self.modules().items()
            if name != "prompt_gen"
        }

    def trainable_parameters(self):
        return [p for p in self.prompt_gen.parameters() if p.requires_grad]

    def eval_mode(self) -> "RetrievalModel":
        for m in self.modules().values():
            m.eval()
        return self

    # -- forward paths ---------------------------------------------------

    def compute_assets(self, images: torch.Tensor) -> tuple[torch.Tensor, np.ndarray]:
        """Frozen per-image precomputation: token sequences and flattened grams.

        ``images`` is a normalized (B, 3, S, S) float tensor. Grams are taken
        per sample through the same code path everywhere for bit determinism.
        """
        if images.ndim != 4:
            raise InputShapeError(f"expected (B,3,S,S) images, got {tuple(images.shape)}")
        with torch.no_grad():
            feats = self.conv(images)
            tokens = self.patch(images)
        grams = np.stack(
            [
                gram_matrix(
                    FeatureMap(data=f.permute(1, 2, 0).numpy(), source_layer="conv3"),
                    self.config.gram_downsample,
                ).flat()
                for f in feats
            ]
        )
        return tokens, grams

    def embed_from_assets(self, tokens: torch.Tensor, grams_flat: np.ndarray) -> torch.Tensor:
        """Differentiable path: style weights -> prompts -> encoder -> embedding.

        Gradient flows only into the prompt generator; call under
        ``torch.no_grad()`` for inference.
        """
        if self.style_space is None:
            raise CheckpointError("style space not fitted; run pass one first")
        style_vecs, _ = style_features_batch(grams_flat, self.style_space)
        dtype = self.prompt_gen.free_tokens.dtype
        gram_t = torch.from_numpy(np.ascontiguousarray(grams_flat)).to(dtype)
        style_t = torch.from_numpy(np.ascontiguousarray(style_vecs)).to(dtype)
        prompts = self.prompt_gen(gram_t, style_t)
        emb, _, _ = self.encoder.encode(tokens.to(dtype), prompts)
        return emb

    def embed_images(self, images: torch.Tensor) -> torch.Tensor:
        """Inference embedding of a normalized image batch."""
        tokens, grams = self.compute_assets(images)
        with torch.no_grad():
            return self.embed_from_assets(tokens, grams)

    def embed_texts(self, texts: list[str]) -> torch.Tensor:
        with torch.no_grad():
            return self.text.encode(texts)

    # -- fingerprinting ---------------------------------------------------

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(asdict(self.config), sort_keys=True).encode())
        h.update("\x00".join(self.text.vocab).encode())
        for name, module in sorted(self.modules().items()):
            h.update(name.encode())
            for key, value in sorted(module.state_dict().items()):
                h.update(key.encode())
                h.update(value.detach().cpu().numpy().tobytes())
        if self.style_space is not None:
            h.update(self.style_space.bases.tobytes())
            h.update(str(self.style_space.k).encode())
        return h.hexdigest()


def save_checkpoint(
    model: RetrievalModel,
    path: str | Path,
    train_config: TrainConfig | None = None,
    epoch: int = 0,
) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_config": asdict(model.config),
        "train_config": asdict(train_config) if train_config else None,
        "vocab": model.text.vocab,
        "epoch": epoch,
        "state": {name: module.state_dict() for name, module in model.modules().items()},
        "style_space": None
        if model.style_space is None
        else {
            "bases": model.style_space.bases,
            "k": model.style_space.k,
            "fit_iterations": model.style_space.fit_iterations,
            "inertia": model.style_space.inertia,
            "seed": model.style_space.seed,
        },
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[RetrievalModel, TrainConfig | None, int]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:  # corrupt file
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version: {version}")
    config = model_config_from_dict(payload["model_config"])
    model = RetrievalModel(config, payload["vocab"])
    for name, module in model.modules().items():
        module.load_state_dict(payload["state"][name])
    ss = payload["style_space"]
    if ss is not None:
        model.style_space = StyleSpace(
            bases=np.asarray(ss["bases"], dtype=np.float64),
            k=int(ss["k"]),
            fit_iterations=int(ss["fit_iterations"]),
            inertia=float(ss["inertia"]),
            seed=int(ss["seed"]),
        )
    train_config = (
        train_config_from_dict(payload["train_config"]) if payload["train_config"] else None
    )
    model.eval_mode()
    return model, train_config, int(payload["epoch"])
