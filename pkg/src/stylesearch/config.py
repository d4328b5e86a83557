"""Configuration objects for the model, prompts, and training.

All sizes are config-driven: the small desk-scale defaults train on CPU in
minutes, while the reference preset reproduces the classic 224px geometry
(third conv layer at 112x112x128, a deep ViT) for shape checks.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigurationError

PROMPT_SOURCES = ("style_space", "gram", "random", "none")


@dataclass(frozen=True)
class PromptConfig:
    """Where prompt tokens are inserted and how they are initialized.

    ``shallow_layers`` and ``deep_layers`` are inclusive 1-indexed ranges that
    must partition ``[1..depth]``. A source of ``"none"`` inserts no tokens in
    that group (used by the insertion-strategy ablations); ``"random"`` uses
    free learnable tokens that ignore the query.
    """

    tokens_per_layer: int = 4
    shallow_source: str = "style_space"
    deep_source: str = "gram"
    shallow_layers: tuple[int, int] | None = None  # default: first half
    deep_layers: tuple[int, int] | None = None  # default: second half

    def resolve(self, depth: int) -> "PromptConfig":
        """Fill in default layer ranges for a concrete encoder depth."""
        shallow = self.shallow_layers or (1, depth // 2)
        deep = self.deep_layers or (depth // 2 + 1, depth)
        cfg = replace(self, shallow_layers=shallow, deep_layers=deep)
        cfg.validate(depth)
        return cfg

    def validate(self, depth: int) -> None:
        if self.tokens_per_layer < 1:
            raise ConfigurationError("tokens_per_layer must be >= 1")
        for name, src in (("shallow", self.shallow_source), ("deep", self.deep_source)):
            if src not in PROMPT_SOURCES:
                raise ConfigurationError(f"{name}_source must be one of {PROMPT_SOURCES}, got {src!r}")
        sh, dp = self.shallow_layers, self.deep_layers
        if sh is None or dp is None:
            raise ConfigurationError("layer ranges are unresolved; call resolve(depth)")
        covered = list(range(sh[0], sh[1] + 1)) + list(range(dp[0], dp[1] + 1))
        if sorted(covered) != list(range(1, depth + 1)):
            raise ConfigurationError(
                f"shallow {sh} and deep {dp} ranges must partition [1..{depth}] without overlap"
            )

    def group_of(self, layer: int) -> str:
        """Return "shallow" or "deep" for a 1-indexed layer."""
        sh = self.shallow_layers
        assert sh is not None
        return "shallow" if sh[0] <= layer <= sh[1] else "deep"


@dataclass(frozen=True)
class ModelConfig:
    """Frozen-backbone geometry and preprocessing constants."""

    image_size: int = 64
    patch_size: int = 16
    embed_dim: int = 256
    depth: int = 8
    num_heads: int = 4
    mlp_ratio: float = 2.0
    conv_channels: tuple[int, int, int] = (16, 16, 32)
    gram_downsample: int = 2
    normalize_mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    normalize_std: tuple[float, float, float] = (0.5, 0.5, 0.5)
    init_seed: int = 0
    prompt: PromptConfig = field(default_factory=PromptConfig)

    def __post_init__(self) -> None:
        if self.image_size % self.patch_size != 0:
            raise ConfigurationError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        if self.embed_dim % self.num_heads != 0:
            raise ConfigurationError("embed_dim must be divisible by num_heads")

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def gram_channels(self) -> int:
        return self.conv_channels[2]

    @property
    def gram_dim(self) -> int:
        return self.gram_channels**2

    @classmethod
    def paper_reference(cls) -> "ModelConfig":
        """224px geometry: conv features 112x112x128, 24-layer d=1024 ViT."""
        return cls(
            image_size=224,
            patch_size=16,
            embed_dim=1024,
            depth=24,
            num_heads=16,
            mlp_ratio=4.0,
            conv_channels=(64, 64, 128),
            gram_downsample=4,
        )


@dataclass(frozen=True)
class TrainConfig:
    """Two-pass training hyperparameters."""

    batch_size: int = 24
    learning_rate: float = 1e-3
    epochs: int = 20
    margin: float = 1.0
    warmup_epochs: int = 1
    weight_decay: float = 0.0
    seed: int = 0
    style_bases: int = 4
    kmeans_max_iter: int = 100
    kmeans_tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be >= 2")
        if self.margin <= 0:
            raise ConfigurationError("margin must be > 0")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")


def _tupled(obj: Any) -> Any:
    if isinstance(obj, list):
        return tuple(_tupled(x) for x in obj)
    return obj


def config_from_dict(raw: dict) -> tuple[ModelConfig, TrainConfig]:
    """Build (ModelConfig, TrainConfig) from a nested dict with optional
    ``model``, ``prompt`` and ``train`` sections."""
    model_raw = {k: _tupled(v) for k, v in dict(raw.get("model", {})).items()}
    prompt_raw = {k: _tupled(v) for k, v in dict(raw.get("prompt", {})).items()}
    train_raw = dict(raw.get("train", {}))
    unknown = set(raw) - {"model", "prompt", "train"}
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    try:
        prompt = PromptConfig(**prompt_raw)
        model = ModelConfig(prompt=prompt, **model_raw)
        train = TrainConfig(**train_raw)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
    return model, train


def model_config_from_dict(raw: dict) -> ModelConfig:
    raw = {k: _tupled(v) for k, v in raw.items()}
    prompt_raw = raw.pop("prompt", {})
    prompt = PromptConfig(**{k: _tupled(v) for k, v in prompt_raw.items()})
    return ModelConfig(prompt=prompt, **raw)


def train_config_from_dict(raw: dict) -> TrainConfig:
    return TrainConfig(**raw)


def load_config(path: str | Path) -> tuple[ModelConfig, TrainConfig]:
    """Load a YAML config file; missing sections fall back to defaults."""
    raw = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config root must be a mapping, got {type(raw).__name__}")
    return config_from_dict(raw)


def config_echo(model: ModelConfig, train: TrainConfig) -> dict:
    """JSON-serializable echo of both configs for reports and checkpoints."""
    return {"model": asdict(model), "train": asdict(train)}
