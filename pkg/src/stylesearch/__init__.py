"""Style-diversified query-based image retrieval.

Queries in any visual style (sketch, art, low-res, plain text, or natural
images) are embedded by a frozen encoder adapted with style-initialized
prompt tokens, then matched against a gallery index by cosine similarity.
"""

from .config import ModelConfig, PromptConfig, TrainConfig, load_config
from .data import ManifestRecord, StyleTag, generate_synthetic_gallery, load_manifest
from .pipeline import RetrievalModel, load_checkpoint, save_checkpoint
from .retrieval import EmbeddingIndex, build_index, evaluate, fuse_queries, recall_at_k, search
from .style import GramMatrix, StyleSpace, StyleVector, gram_matrix, kmeans_fit, style_feature
from .training import train_two_pass

__version__ = "0.1.0"

__all__ = [
    "EmbeddingIndex",
    "GramMatrix",
    "ManifestRecord",
    "ModelConfig",
    "PromptConfig",
    "RetrievalModel",
    "StyleSpace",
    "StyleTag",
    "StyleVector",
    "TrainConfig",
    "build_index",
    "evaluate",
    "fuse_queries",
    "generate_synthetic_gallery",
    "gram_matrix",
    "kmeans_fit",
    "load_checkpoint",
    "load_config",
    "load_manifest",
    "recall_at_k",
    "save_checkpoint",
    "search",
    "style_feature",
    "train_two_pass",
    "__version__",
]
