"""Dataset manifests, the desk-scale style transforms, and the synthetic
procedural gallery generator.

Manifest schema (v1, line-delimited JSON, one record per line):
  gallery_id   non-empty string, links query rows to their gallery image
  image_path   gallery image, relative to the manifest file
  style        one of text | sketch | art | lowres | image
  query_path   image-form query (absent for text rows)
  text         caption (text rows only)
  split        train | test
  attributes   {shape, color, pose} echo for synthetic data (optional)
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .errors import InputShapeError, ManifestError, UnsupportedTransformError

MANIFEST_SCHEMA_VERSION = 1


class StyleTag(str, Enum):
    TEXT = "text"
    SKETCH = "sketch"
    ART = "art"
    LOWRES = "lowres"
    IMAGE = "image"


IMAGE_STYLES = (StyleTag.SKETCH, StyleTag.ART, StyleTag.LOWRES, StyleTag.IMAGE)
QUERY_STYLES = (StyleTag.TEXT, StyleTag.SKETCH, StyleTag.ART, StyleTag.LOWRES)


@dataclass(frozen=True)
class ManifestRecord:
    gallery_id: str
    image_path: str
    style: StyleTag
    split: str
    query_path: str | None = None
    text: str | None = None
    attributes: dict | None = None

    def validate(self) -> None:
        if not self.gallery_id:
            raise ManifestError("gallery_id must be non-empty")
        if self.split not in ("train", "test"):
            raise ManifestError(f"split must be train|test, got {self.split!r}")
        if self.style == StyleTag.TEXT:
            if not self.text or self.query_path is not None:
                raise ManifestError(
                    f"{self.gallery_id}: text rows carry text and no query_path"
                )
        else:
            if self.text is not None or not self.query_path:
                raise ManifestError(
                    f"{self.gallery_id}: {self.style.value} rows carry query_path and no text"
                )

    def to_json(self) -> str:
        raw = {k: v for k, v in asdict(self).items() if v is not None}
        raw["style"] = self.style.value
        return json.dumps(raw, sort_keys=True)


def write_manifest(records: list[ManifestRecord], path: str | Path) -> None:
    Path(path).write_text("".join(r.to_json() + "\n" for r in records))


def load_manifest(path: str | Path, check_files: bool = True) -> list[ManifestRecord]:
    """Parse and validate a manifest; order is preserved as on disk."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    records: list[ManifestRecord] = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            record = ManifestRecord(
                gallery_id=raw["gallery_id"],
                image_path=raw["image_path"],
                style=StyleTag(raw["style"]),
                split=raw["split"],
                query_path=raw.get("query_path"),
                text=raw.get("text"),
                attributes=raw.get("attributes"),
            )
            record.validate()
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from exc
        records.append(record)
    if check_files:
        missing = []
        for r in records:
            for rel in (r.image_path, r.query_path):
                if rel is not None and not (path.parent / rel).exists():
                    missing.append(f"{r.gallery_id}: {rel}")
        if missing:
            raise ManifestError("missing referenced files: " + "; ".join(missing))
    return records


def resolve_path(manifest_path: str | Path, rel: str) -> Path:
    return Path(manifest_path).parent / rel


# ---------------------------------------------------------------------------
# Style transforms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransformParams:
    lowres_factor: int = 8
    sketch_threshold: float = 0.04  # on gradient magnitude of [0,1] grayscale
    art_colors: int = 8
    art_hue_shift: int = 64  # of 256 hue steps


def style_transform(
    image: np.ndarray, tag: StyleTag, params: TransformParams = TransformParams()
) -> np.ndarray:
    """Derive a query-style image from an S x S x 3 uint8 gallery image.

    lowres: box-downsample then nearest-neighbor upsample back to full size.
    sketch: central-difference gradient magnitude, binarized and inverted
            (edges black on white).
    art:    median-cut palette quantization plus a fixed hue rotation.
    """
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise InputShapeError(f"expected uint8 HxWx3 image, got {image.shape} {image.dtype}")
    h, w = image.shape[:2]
    if tag == StyleTag.LOWRES:
        f = params.lowres_factor
        if h % f or w % f:
            raise InputShapeError(f"image {h}x{w} not divisible by lowres factor {f}")
        small = image.reshape(h // f, f, w // f, f, 3).mean(axis=(1, 3))
        return np.repeat(np.repeat(small, f, axis=0), f, axis=1).round().astype(np.uint8)
    if tag == StyleTag.SKETCH:
        gray = image.astype(np.float64).mean(axis=2) / 255.0
        gy, gx = np.gradient(gray)
        magnitude = np.sqrt(gx**2 + gy**2)
        edges = magnitude > params.sketch_threshold
        out = np.full((h, w), 255, dtype=np.uint8)
        out[edges] = 0
        return np.stack([out] * 3, axis=2)
    if tag == StyleTag.ART:
        quantized = (
            Image.fromarray(image)
            .quantize(colors=params.art_colors, method=Image.Quantize.MEDIANCUT)
            .convert("RGB")
        )
        hsv = np.array(quantized.convert("HSV"))
        hsv[..., 0] = (hsv[..., 0].astype(np.int32) + params.art_hue_shift) % 256
        return np.array(Image.fromarray(hsv, mode="HSV").convert("RGB"))
    raise UnsupportedTransformError(f"no transform for style {tag.value!r}")


# ---------------------------------------------------------------------------
# Synthetic gallery
# ---------------------------------------------------------------------------

SHAPES = ("circle", "square", "triangle", "star")
COLORS = {
    "red": (220, 40, 40),
    "green": (40, 180, 70),
    "blue": (40, 80, 220),
    "yellow": (230, 210, 40),
    "orange": (240, 140, 30),
    "purple": (150, 60, 200),
    "cyan": (50, 200, 210),
    "pink": (240, 120, 180),
}
POSES = (0, 45, 90, 135)  # degrees; each pose also shifts the object center
_POSE_OFFSETS = ((-1, -1), (1, -1), (-1, 1), (1, 1))  # in units of S/4

CAPTION_TEMPLATE = "a {color} {shape} rotated {pose}"


def _background(size: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth low-amplitude texture: a tinted base plus two soft sinusoids.

    Amplitudes stay below the sketch gradient threshold so backgrounds vanish
    from edge maps but still tell near-duplicate items apart in other styles.
    """
    base = rng.uniform(110, 160)
    tint = rng.uniform(-12, 12, size=3)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    texture = np.zeros((size, size))
    for _ in range(2):
        fx, fy = rng.uniform(1.0, 3.0, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(4, 9)
        texture += amp * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
    img = base + texture[..., None] + tint[None, None, :]
    return np.clip(img, 0, 255).astype(np.uint8)


def _shape_points(shape: str, cx: float, cy: float, radius: float, angle_deg: float) -> list[tuple[float, float]]:
    if shape == "square":
        base = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
        pts = [(x * radius / math.sqrt(2) * 1.3, y * radius / math.sqrt(2) * 1.3) for x, y in base]
    elif shape == "triangle":
        pts = [
            (radius * math.cos(math.radians(90 + k * 120)), -radius * math.sin(math.radians(90 + k * 120)))
            for k in range(3)
        ]
    elif shape == "star":
        pts = []
        for k in range(10):
            r = radius if k % 2 == 0 else radius * 0.45
            theta = math.radians(90 + k * 36)
            pts.append((r * math.cos(theta), -r * math.sin(theta)))
    else:
        raise ValueError(f"unknown polygon shape {shape!r}")
    a = math.radians(angle_deg)
    cos_a, sin_a = math.cos(a), math.sin(a)
    return [(cx + x * cos_a - y * sin_a, cy + x * sin_a + y * cos_a) for x, y in pts]


def render_scene(size: int, shape: str, color: str, pose: int, rng: np.random.Generator) -> np.ndarray:
    """One procedural scene, drawn 4x supersampled for smooth edges.

    Object size varies per item: like the background texture, it is unlabeled
    nuisance variation that lets image-form queries tell apart items sharing
    the same (shape, color, pose) attributes.
    """
    ss = 4
    big = size * ss
    canvas = Image.fromarray(_background(size, rng)).resize((big, big), Image.NEAREST)
    draw = ImageDraw.Draw(canvas)
    pose_idx = POSES.index(pose)
    off = _POSE_OFFSETS[pose_idx]
    cx = big / 2 + off[0] * big / 4
    cy = big / 2 + off[1] * big / 4
    radius = big * rng.uniform(0.16, 0.27)
    rgb = COLORS[color]
    outline = (25, 25, 25)     # dark rim keeps object boundaries visible to
    rim = max(2, int(2 * ss))  # the sketch transform for every fill color
    if shape == "circle":
        draw.ellipse(
            [cx - radius, cy - radius, cx + radius, cy + radius],
            fill=rgb, outline=outline, width=rim,
        )
    else:
        draw.polygon(_shape_points(shape, cx, cy, radius, pose), fill=rgb, outline=outline, width=rim)
    return np.array(canvas.resize((size, size), Image.LANCZOS))


def generate_synthetic_gallery(
    count: int,
    seed: int,
    output_dir: str | Path,
    image_size: int = 64,
    train_fraction: float = 0.8,
    transform_params: TransformParams = TransformParams(),
) -> Path:
    """Render ``count`` scenes, derive the three image-style queries and a
    caption for each, and write ``manifest.jsonl``. Deterministic per seed.

    Attribute combinations are exhausted before repeating, so any count >= 128
    covers the whole (shape, color, pose) grid.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    out = Path(output_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    for style in ("sketch", "art", "lowres"):
        (out / "queries" / style).mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    combos = [(s, c, p) for s in SHAPES for c in COLORS for p in POSES]
    order = rng.permutation(len(combos))
    attrs = [combos[order[i % len(combos)]] for i in range(count)]

    n_train = int(round(count * train_fraction))
    split_order = rng.permutation(count)
    splits = np.empty(count, dtype=object)
    splits[split_order[:n_train]] = "train"
    splits[split_order[n_train:]] = "test"

    records: list[ManifestRecord] = []
    for i, (shape, color, pose) in enumerate(attrs):
        gid = f"g{i:04d}"
        scene = render_scene(image_size, shape, color, pose, rng)
        image_rel = f"images/{gid}.png"
        Image.fromarray(scene).save(out / image_rel)
        attr = {"shape": shape, "color": color, "pose": pose}
        common = dict(gallery_id=gid, image_path=image_rel, split=splits[i], attributes=attr)
        caption = CAPTION_TEMPLATE.format(color=color, shape=shape, pose=pose)
        records.append(ManifestRecord(style=StyleTag.TEXT, text=caption, **common))
        for style in (StyleTag.SKETCH, StyleTag.ART, StyleTag.LOWRES):
            derived = style_transform(scene, style, transform_params)
            query_rel = f"queries/{style.value}/{gid}.png"
            Image.fromarray(derived).save(out / query_rel)
            records.append(ManifestRecord(style=style, query_path=query_rel, **common))

    manifest_path = out / "manifest.jsonl"
    write_manifest(records, manifest_path)
    return manifest_path


# ---------------------------------------------------------------------------
# Image loading for the model
# ---------------------------------------------------------------------------


def load_image(path: str | Path, image_size: int) -> np.ndarray:
    """Decode to RGB uint8 at the model's input size (bilinear if resized)."""
    img = Image.open(path).convert("RGB")
    if img.size != (image_size, image_size):
        img = img.resize((image_size, image_size), Image.BILINEAR)
    return np.array(img)


def preprocess(image: np.ndarray, mean: tuple, std: tuple) -> np.ndarray:
    """uint8 HWC -> normalized float32 CHW."""
    x = image.astype(np.float32) / 255.0
    x = (x - np.array(mean, dtype=np.float32)) / np.array(std, dtype=np.float32)
    return x.transpose(2, 0, 1)
