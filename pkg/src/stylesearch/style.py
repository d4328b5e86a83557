"""Textural style features: gram matrices, the clustered style space, and
softmax-weighted style vectors.

Everything here is plain numpy in double precision; the clustering runs on
flattened gram matrices so centers stay comparable across query styles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputShapeError, InsufficientDataError

STYLE_SPACE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class FeatureMap:
    """H x W x C real-valued feature grid produced by a conv layer."""

    data: np.ndarray
    source_layer: str = ""

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise InputShapeError(f"feature map must be HxWxC, got shape {self.data.shape}")
        if min(self.data.shape) <= 0:
            raise InputShapeError(f"feature map has empty dimension: {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise InputShapeError("feature map contains non-finite entries")


@dataclass(frozen=True)
class GramMatrix:
    """C x C channel inner-product matrix, normalized by spatial position count."""

    data: np.ndarray
    channels: int
    normalizer: float

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)


@dataclass(frozen=True)
class StyleVector:
    """Weighted combination of style bases with its softmax weights."""

    vector: np.ndarray
    weights: np.ndarray


def gram_matrix(feature: FeatureMap, downsample_factor: int = 1) -> GramMatrix:
    """Average-pool the feature map spatially, then take the normalized
    channel gram ``X^T X / positions`` of the pooled map.

    The pooled map is reshaped to a (positions x channels) matrix X; dividing
    by the position count keeps grams from different resolutions comparable.
    """
    if downsample_factor < 1:
        raise InputShapeError(f"downsample_factor must be >= 1, got {downsample_factor}")
    h, w, c = feature.data.shape
    if h % downsample_factor or w % downsample_factor:
        raise InputShapeError(
            f"spatial dims {h}x{w} not divisible by downsample factor {downsample_factor}"
        )
    f = downsample_factor
    x = feature.data.astype(np.float64)
    if f > 1:
        x = x.reshape(h // f, f, w // f, f, c).mean(axis=(1, 3))
    positions = (h // f) * (w // f)
    flat = x.reshape(positions, c)
    gram = flat.T @ flat / positions
    gram = (gram + gram.T) / 2.0  # kill last-bit asymmetry from BLAS
    return GramMatrix(data=gram, channels=c, normalizer=float(positions))


@dataclass
class StyleSpace:
    """k cluster-center bases in flattened-gram space plus fit metadata."""

    bases: np.ndarray  # (k, dim) float64
    k: int
    fit_iterations: int
    inertia: float
    seed: int
    # per-iteration objective values from the fit; diagnostic only, not persisted
    history: list = field(default_factory=list, compare=False, repr=False)

    @property
    def dim(self) -> int:
        return int(self.bases.shape[1])

    def assign(self, vec: np.ndarray) -> int:
        """Index of the nearest basis by squared Euclidean distance."""
        d = ((self.bases - vec[None, :]) ** 2).sum(axis=1)
        return int(np.argmin(d))

    def save(self, path: str | Path) -> None:
        np.savez(
            path,
            bases=self.bases,
            k=np.int64(self.k),
            fit_iterations=np.int64(self.fit_iterations),
            inertia=np.float64(self.inertia),
            seed=np.int64(self.seed),
            format_version=np.int64(STYLE_SPACE_FORMAT_VERSION),
        )

    @classmethod
    def load(cls, path: str | Path) -> "StyleSpace":
        with np.load(path) as z:
            version = int(z["format_version"])
            if version != STYLE_SPACE_FORMAT_VERSION:
                raise InputShapeError(f"unknown style space format version {version}")
            return cls(
                bases=z["bases"].astype(np.float64),
                k=int(z["k"]),
                fit_iterations=int(z["fit_iterations"]),
                inertia=float(z["inertia"]),
                seed=int(z["seed"]),
            )


def _assign_labels(points: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-center labels and squared distances (ties go to the lowest index)."""
    # (n, k) squared distances without forming n*k*dim intermediates
    sq = (points**2).sum(axis=1, keepdims=True) - 2.0 * points @ centers.T + (centers**2).sum(axis=1)
    np.maximum(sq, 0.0, out=sq)
    labels = np.argmin(sq, axis=1)
    return labels, sq[np.arange(len(points)), labels]


def kmeans_fit(
    grams: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> StyleSpace:
    """Lloyd's iteration over flattened gram vectors.

    Centers are initialized by sampling k distinct input points. Assignment
    minimizes squared Euclidean distance; an empty cluster is re-seeded from
    the point currently farthest from its assigned center. Iteration stops
    when the largest center shift drops below ``tol``.
    """
    points = np.asarray(grams, dtype=np.float64)
    if points.ndim != 2:
        raise InputShapeError(f"grams must be a 2-D (n, dim) array, got shape {points.shape}")
    n = points.shape[0]
    if n < k:
        raise InsufficientDataError(f"need at least k={k} gram vectors, got {n}")
    rng = np.random.default_rng(seed)
    centers = points[rng.choice(n, size=k, replace=False)].copy()

    history: list[float] = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        labels, sq = _assign_labels(points, centers)
        for j in range(k):
            if not np.any(labels == j):
                # farthest point from its current center becomes the new seed
                far = int(np.argmax(sq))
                centers[j] = points[far]
                labels[far] = j
                sq[far] = 0.0
        history.append(float(sq.sum()))
        new_centers = np.stack([points[labels == j].mean(axis=0) for j in range(k)])
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift < tol:
            break

    labels, sq = _assign_labels(points, centers)
    inertia = float(sq.sum())
    history.append(inertia)
    return StyleSpace(
        bases=centers,
        k=k,
        fit_iterations=iterations,
        inertia=inertia,
        seed=seed,
        history=history,
    )


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors; zero-norm inputs yield 0."""
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def style_feature(gram: GramMatrix, space: StyleSpace) -> StyleVector:
    """Softmax over cosine similarities to each basis, then the weighted sum
    of the bases. Zero-norm vectors contribute cosine 0, keeping the map total."""
    g = gram.flat()
    if g.shape[0] != space.dim:
        raise InputShapeError(
            f"flattened gram dim {g.shape[0]} does not match basis dim {space.dim}"
        )
    cosines = np.array([cosine_similarity(g, mu) for mu in space.bases])
    shifted = np.exp(cosines - cosines.max())
    weights = shifted / shifted.sum()
    vector = weights @ space.bases
    return StyleVector(vector=vector, weights=weights)


def style_features_batch(grams_flat: np.ndarray, space: StyleSpace) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``style_feature`` over rows of flattened grams.

    Returns (vectors (n, dim), weights (n, k)).
    """
    g = np.asarray(grams_flat, dtype=np.float64)
    gn = np.linalg.norm(g, axis=1, keepdims=True)
    bn = np.linalg.norm(space.bases, axis=1, keepdims=True)
    safe_g = np.where(gn == 0.0, 1.0, gn)
    safe_b = np.where(bn == 0.0, 1.0, bn)
    cosines = (g / safe_g) @ (space.bases / safe_b).T
    cosines[gn[:, 0] == 0.0, :] = 0.0
    cosines[:, bn[:, 0] == 0.0] = 0.0
    shifted = np.exp(cosines - cosines.max(axis=1, keepdims=True))
    weights = shifted / shifted.sum(axis=1, keepdims=True)
    return weights @ space.bases, weights
