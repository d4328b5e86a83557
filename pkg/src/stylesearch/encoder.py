"""Style-initialized prompt tuning of the frozen visual encoder.

Prompt tokens are generated per query: one learnable linear map per layer
group projects the configured source (style vector for shallow layers, the
flattened gram for deep layers, by default) to m tokens of dimension d, plus
a per-layer free token set. Every transformer layer consumes
``[cls, prompts, patches]`` and its prompt outputs are discarded; the next
layer gets fresh prompts. Only the projections and free tokens are trainable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .backbone import Embedding, TokenSequence, TransformerBlock
from .config import ModelConfig, PromptConfig
from .errors import ConfigurationError, InputShapeError
from .style import GramMatrix, StyleVector


@dataclass(frozen=True)
class PromptSet:
    """Per-layer prompt tokens for one query; ``None`` where a group inserts none."""

    tokens: tuple  # length depth, entries (m, d) float arrays or None

    def count(self, layer: int) -> int:
        """Token count at a 1-indexed layer."""
        t = self.tokens[layer - 1]
        return 0 if t is None else int(t.shape[0])


@dataclass
class EncoderOutput:
    """Normalized retrieval embedding plus optional per-layer diagnostics."""

    embedding: Embedding
    layer_input_lengths: list[int] = field(default_factory=list)
    layer_states: list[np.ndarray] | None = None


class PromptGenerator(nn.Module):
    """Learnable projections from (style vector, gram) to per-layer prompt tokens.

    Projection weights start zero-mean scaled-uniform with zero bias; free
    tokens start at zero except for ``random``-source groups, which get
    unit-RMS random tokens and ignore the query entirely.
    """

    def __init__(self, gram_dim: int, style_dim: int, depth: int, embed_dim: int, config: PromptConfig):
        super().__init__()
        config.validate(depth)
        self.config = config
        self.depth = depth
        self.embed_dim = embed_dim
        self.tokens_per_layer = config.tokens_per_layer
        self._source_dims = {"gram": gram_dim, "style_space": style_dim}

        m, d = config.tokens_per_layer, embed_dim
        self.projections = nn.ModuleDict()
        for group, source in (("shallow", config.shallow_source), ("deep", config.deep_source)):
            if source in ("style_space", "gram"):
                proj = nn.Linear(self._source_dims[source], m * d)
                bound = 1.0 / math.sqrt(proj.in_features)
                nn.init.uniform_(proj.weight, -bound, bound)
                nn.init.zeros_(proj.bias)
                self.projections[group] = proj

        free = torch.zeros(depth, m, d)
        for layer in range(1, depth + 1):
            group = config.group_of(layer)
            source = config.shallow_source if group == "shallow" else config.deep_source
            if source == "random":
                free[layer - 1].uniform_(-math.sqrt(3.0 / d), math.sqrt(3.0 / d))
        self.free_tokens = nn.Parameter(free)

    def _group_source(self, group: str) -> str:
        return self.config.shallow_source if group == "shallow" else self.config.deep_source

    def forward(self, gram_flat: torch.Tensor, style_vec: torch.Tensor) -> list[torch.Tensor | None]:
        """Per-layer prompt tokens for a batch.

        Returns a list of length ``depth`` with (B, m, d) tensors, or None for
        layers whose group source is "none".
        """
        if gram_flat.ndim != 2 or style_vec.ndim != 2:
            raise InputShapeError("gram_flat and style_vec must be 2-D (batch, dim)")
        for name, tensor, key in (("gram", gram_flat, "gram"), ("style", style_vec, "style_space")):
            if tensor.shape[1] != self._source_dims[key]:
                raise InputShapeError(
                    f"{name} dim {tensor.shape[1]} does not match projection input {self._source_dims[key]}"
                )
        batch = gram_flat.shape[0]
        m, d = self.tokens_per_layer, self.embed_dim
        projected = {}
        for group, proj in self.projections.items():
            source = gram_flat if self._group_source(group) == "gram" else style_vec
            projected[group] = proj(source).view(batch, m, d)

        prompts: list[torch.Tensor | None] = []
        for layer in range(1, self.depth + 1):
            group = self.config.group_of(layer)
            source = self._group_source(group)
            free = self.free_tokens[layer - 1].unsqueeze(0).expand(batch, -1, -1)
            if source == "none":
                prompts.append(None)
            elif source == "random":
                prompts.append(free)
            else:
                prompts.append(projected[group] + free)
        return prompts


def init_prompts(gram: GramMatrix, style: StyleVector, generator: PromptGenerator) -> PromptSet:
    """Prompt tokens for a single query from its gram matrix and style vector."""
    gram_t = torch.from_numpy(gram.flat().astype(np.float32)).unsqueeze(0)
    style_t = torch.from_numpy(style.vector.astype(np.float32)).unsqueeze(0)
    with torch.no_grad():
        layers = generator(gram_t.to(generator.free_tokens.dtype), style_t.to(generator.free_tokens.dtype))
    return PromptSet(tokens=tuple(None if t is None else t[0].detach().numpy() for t in layers))


class PromptTunedEncoder(nn.Module):
    """Frozen transformer stack consuming fresh prompt tokens at every layer."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.depth = config.depth
        self.blocks = nn.ModuleList(
            [TransformerBlock(config.embed_dim, config.num_heads, config.mlp_ratio) for _ in range(config.depth)]
        )
        self.norm = nn.LayerNorm(config.embed_dim)
        self.head = nn.Linear(config.embed_dim, config.embed_dim)

    def encode(
        self,
        tokens: torch.Tensor,
        prompts: list[torch.Tensor | None],
        capture_states: bool = False,
    ) -> tuple[torch.Tensor, list[int], list[torch.Tensor]]:
        """Forward a (B, 1+P, d) token batch with per-layer prompts.

        Layer i sees ``[cls, prompts_i, patches]``; prompt outputs are dropped
        before layer i+1. Returns (normalized embeddings, per-layer input
        lengths, optional per-layer cls snapshots).
        """
        if len(prompts) != self.depth:
            raise ConfigurationError(
                f"prompt set covers {len(prompts)} layers, encoder has {self.depth}"
            )
        cls = tokens[:, :1]
        patches = tokens[:, 1:]
        lengths: list[int] = []
        states: list[torch.Tensor] = []
        for block, p in zip(self.blocks, prompts):
            if p is None:
                seq = torch.cat([cls, patches], dim=1)
                n_prompt = 0
            else:
                seq = torch.cat([cls, p, patches], dim=1)
                n_prompt = p.shape[1]
            lengths.append(seq.shape[1])
            out = block(seq)
            cls = out[:, :1]
            patches = out[:, 1 + n_prompt:]
            if capture_states:
                states.append(cls[:, 0].detach())
        emb = self.head(self.norm(cls[:, 0]))
        emb = torch.nn.functional.normalize(emb, dim=-1)
        return emb, lengths, states


def encode_query(
    encoder: PromptTunedEncoder,
    tokens: TokenSequence,
    prompts: PromptSet,
    capture_states: bool = False,
) -> EncoderOutput:
    """Single-query encode over spec-level token/prompt containers."""
    dtype = next(encoder.parameters()).dtype
    seq = torch.from_numpy(
        np.concatenate([tokens.class_token[None, :], tokens.patch_tokens], axis=0)
    ).to(dtype).unsqueeze(0)
    prompt_tensors = [
        None if t is None else torch.from_numpy(np.asarray(t)).to(dtype).unsqueeze(0)
        for t in prompts.tokens
    ]
    with torch.no_grad():
        emb, lengths, states = encoder.encode(seq, prompt_tensors, capture_states=capture_states)
    return EncoderOutput(
        embedding=Embedding(vector=emb[0].numpy(), normalized=True),
        layer_input_lengths=lengths,
        layer_states=[s[0].numpy() for s in states] if capture_states else None,
    )
