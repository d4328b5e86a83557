"""Frozen feature extractors.

Three towers share one embedding dimension: a small conv stack whose third
conv layer feeds gram computation, a patch-embedding + transformer stem for
the retrieval encoder, and a token-averaging text encoder. All weights are
randomly initialized from a fixed seed and never receive gradients; the
reference preset reproduces the classic 112x112x128 conv geometry at 224px.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .config import ModelConfig
from .errors import EmptyQueryError, InputShapeError
from .style import FeatureMap

UNK_TOKEN = "<unk>"


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation."""
    return re.findall(r"[a-z0-9]+", text.lower())


def build_vocab(texts: list[str]) -> list[str]:
    """Sorted vocabulary over all tokens in the corpus, with <unk> first."""
    tokens = sorted({tok for t in texts for tok in tokenize(t)})
    return [UNK_TOKEN] + tokens


@dataclass(frozen=True)
class Embedding:
    """A d-dimensional vector plus its normalization flag."""

    vector: np.ndarray
    normalized: bool = True


@dataclass(frozen=True)
class TokenSequence:
    """Class token plus ordered patch tokens, all of dimension d."""

    class_token: np.ndarray
    patch_tokens: np.ndarray  # (num_patches, d)


class ConvExtractor(nn.Module):
    """Three conv blocks; the output of the third conv is the style feature map.

    Replicate padding keeps constant inputs constant across spatial positions.
    A single 2x pool after the second conv halves the resolution, so the
    output is (S/2, S/2, conv_channels[2]).
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        c1, c2, c3 = config.conv_channels
        self.image_size = config.image_size
        self.conv1 = nn.Conv2d(3, c1, 3, padding=1, padding_mode="replicate")
        self.conv2 = nn.Conv2d(c1, c2, 3, padding=1, padding_mode="replicate")
        self.pool = nn.MaxPool2d(2)
        self.conv3 = nn.Conv2d(c2, c3, 3, padding=1, padding_mode="replicate")
        self.act = nn.ReLU()
        for conv in (self.conv1, self.conv2, self.conv3):
            nn.init.kaiming_normal_(conv.weight, nonlinearity="relu")
            nn.init.zeros_(conv.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != self.image_size or x.shape[3] != self.image_size:
            raise InputShapeError(
                f"expected (B, 3, {self.image_size}, {self.image_size}) input, got {tuple(x.shape)}"
            )
        x = self.act(self.conv1(x))
        x = self.pool(self.act(self.conv2(x)))
        return self.act(self.conv3(x))


def conv_features(extractor: ConvExtractor, image: torch.Tensor) -> FeatureMap:
    """Run a single normalized RGB image (3,S,S) through the frozen extractor."""
    if image.ndim != 3:
        raise InputShapeError(f"expected a (3, S, S) image, got shape {tuple(image.shape)}")
    with torch.no_grad():
        out = extractor(image.unsqueeze(0))[0]
    return FeatureMap(data=out.permute(1, 2, 0).numpy(), source_layer="conv3")


class PatchEmbed(nn.Module):
    """Patchify via a strided conv, prepend a frozen class token, and encode
    patch location by binding: each position applies a fixed random sign mask
    to its token on top of an additive positional embedding. Binding keeps
    layout information alive even under near-uniform (random) attention,
    where purely additive position vectors cancel in token averages."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.patch_size = config.patch_size
        self.proj = nn.Conv2d(3, config.embed_dim, config.patch_size, stride=config.patch_size)
        nn.init.xavier_uniform_(self.proj.weight.view(config.embed_dim, -1))
        nn.init.zeros_(self.proj.bias)
        self.cls_token = nn.Parameter(torch.randn(1, 1, config.embed_dim) * 0.02)
        seq_len = 1 + config.num_patches
        self.pos_embed = nn.Parameter(torch.randn(1, seq_len, config.embed_dim) * 0.3)
        signs = (torch.randint(0, 2, (1, seq_len, config.embed_dim)) * 2 - 1).float()
        self.pos_gain = nn.Parameter(signs)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] % self.patch_size or x.shape[-2] % self.patch_size:
            raise InputShapeError(
                f"image side {tuple(x.shape[-2:])} not divisible by patch size {self.patch_size}"
            )
        tokens = self.proj(x).flatten(2).transpose(1, 2)  # (B, P, d)
        if tokens.shape[1] + 1 != self.pos_embed.shape[1]:
            raise InputShapeError(
                f"got {tokens.shape[1]} patches, positional table has {self.pos_embed.shape[1] - 1}"
            )
        cls = self.cls_token.expand(x.shape[0], -1, -1)
        seq = torch.cat([cls, tokens], dim=1)
        return seq * self.pos_gain + self.pos_embed


def patch_embed(embedder: PatchEmbed, image: torch.Tensor) -> TokenSequence:
    """Token sequence for one normalized RGB image (3,S,S)."""
    if image.ndim != 3:
        raise InputShapeError(f"expected a (3, S, S) image, got shape {tuple(image.shape)}")
    with torch.no_grad():
        seq = embedder(image.unsqueeze(0))[0]
    return TokenSequence(class_token=seq[0].numpy(), patch_tokens=seq[1:].numpy())


class TransformerBlock(nn.Module):
    """Pre-LN attention + MLP block."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, num_heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        attn_out, _ = self.attn(h, h, h, need_weights=False)
        x = x + attn_out
        return x + self.mlp(self.norm2(x))


class TextEncoder(nn.Module):
    """Mean of learned token embeddings followed by one linear layer.

    Order-insensitive by construction; unknown tokens map to <unk>.
    """

    def __init__(self, vocab: list[str], embed_dim: int):
        super().__init__()
        if not vocab or vocab[0] != UNK_TOKEN:
            vocab = [UNK_TOKEN] + [t for t in vocab if t != UNK_TOKEN]
        self.vocab = list(vocab)
        self.index = {tok: i for i, tok in enumerate(self.vocab)}
        self.embedding = nn.Embedding(len(self.vocab), embed_dim)
        self.proj = nn.Linear(embed_dim, embed_dim)

    def encode(self, texts: list[str]) -> torch.Tensor:
        """L2-normalized embeddings for a batch of strings."""
        means = []
        for text in texts:
            tokens = tokenize(text)
            if not tokens:
                raise EmptyQueryError(f"text query is empty after tokenization: {text!r}")
            idx = torch.tensor([self.index.get(t, 0) for t in tokens], dtype=torch.long)
            means.append(self.embedding(idx).mean(dim=0))
        out = self.proj(torch.stack(means))
        return torch.nn.functional.normalize(out, dim=-1)


def encode_text(encoder: TextEncoder, text: str) -> Embedding:
    """Single-string convenience wrapper around :meth:`TextEncoder.encode`."""
    with torch.no_grad():
        vec = encoder.encode([text])[0]
    return Embedding(vector=vec.numpy(), normalized=True)


def freeze(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        p.requires_grad_(False)
    return module


def parameter_checksum(module: nn.Module) -> str:
    """SHA-256 over all parameter values in named order; detects any drift."""
    h = hashlib.sha256()
    for name, p in sorted(module.named_parameters()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()
