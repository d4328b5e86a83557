"""Manifest parsing, style transforms, and the synthetic generator."""

import json

import numpy as np
import pytest

from stylesearch.data import (
    CAPTION_TEMPLATE,
    ManifestRecord,
    StyleTag,
    TransformParams,
    generate_synthetic_gallery,
    load_image,
    load_manifest,
    preprocess,
    style_transform,
    write_manifest,
)
from stylesearch.errors import InputShapeError, ManifestError, UnsupportedTransformError


def make_record(**kw) -> ManifestRecord:
    defaults = dict(
        gallery_id="g0001",
        image_path="images/g0001.png",
        style=StyleTag.SKETCH,
        split="train",
        query_path="queries/sketch/g0001.png",
    )
    defaults.update(kw)
    return ManifestRecord(**defaults)


class TestManifest:
    def test_empty_file_gives_empty_list(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text("")
        assert load_manifest(path) == []

    def test_text_row_with_query_path_rejected(self):
        record = make_record(style=StyleTag.TEXT, text="a red circle")
        with pytest.raises(ManifestError):
            record.validate()

    def test_image_row_with_text_rejected(self):
        record = make_record(text="also text")
        with pytest.raises(ManifestError):
            record.validate()

    def test_parse_error_reports_line_number(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        good = make_record(style=StyleTag.TEXT, query_path=None, text="a circle").to_json()
        path.write_text(good + "\n{broken json\n")
        with pytest.raises(ManifestError, match=":2:"):
            load_manifest(path, check_files=False)

    def test_missing_files_listed(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        write_manifest([make_record()], path)
        with pytest.raises(ManifestError, match="g0001"):
            load_manifest(path)

    def test_round_trip_of_generated_records(self, tmp_path):
        rng = np.random.default_rng(0)
        records = []
        for i in range(100):
            style = list(StyleTag)[int(rng.integers(len(StyleTag)))]
            if style == StyleTag.TEXT:
                records.append(
                    make_record(
                        gallery_id=f"g{i:04d}", style=style, query_path=None,
                        text=f"caption {i}", split="test" if i % 3 else "train",
                    )
                )
            else:
                records.append(
                    make_record(
                        gallery_id=f"g{i:04d}", style=style,
                        query_path=f"queries/{style.value}/g{i:04d}.png",
                    )
                )
        path = tmp_path / "manifest.jsonl"
        write_manifest(records, path)
        assert load_manifest(path, check_files=False) == records

    def test_unknown_style_rejected(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        raw = json.loads(make_record().to_json())
        raw["style"] = "hologram"
        path.write_text(json.dumps(raw) + "\n")
        with pytest.raises(ManifestError):
            load_manifest(path, check_files=False)


class TestStyleTransforms:
    def test_constant_image_lowres_identity(self):
        img = np.full((64, 64, 3), 137, dtype=np.uint8)
        out = style_transform(img, StyleTag.LOWRES)
        np.testing.assert_array_equal(out, img)

    def test_lowres_is_blockwise_mean(self):
        img = np.zeros((16, 16, 3), dtype=np.uint8)
        img[:8] = 100
        img[8:] = 200
        out = style_transform(img, StyleTag.LOWRES, TransformParams(lowres_factor=8))
        assert set(np.unique(out[:8])) == {100}
        assert set(np.unique(out[8:])) == {200}

    def test_lowres_indivisible_rejected(self):
        with pytest.raises(InputShapeError):
            style_transform(np.zeros((60, 60, 3), dtype=np.uint8), StyleTag.LOWRES)

    def test_constant_image_sketch_all_white(self):
        img = np.full((32, 32, 3), 99, dtype=np.uint8)
        out = style_transform(img, StyleTag.SKETCH)
        assert (out == 255).all()

    def test_step_edge_sketch_band(self):
        """Central differences put edge pixels exactly at columns c-1 and c."""
        img = np.zeros((16, 16, 3), dtype=np.uint8)
        c = 8
        img[:, c:] = 255
        out = style_transform(img, StyleTag.SKETCH)
        black_cols = sorted(set(np.where(out[..., 0] == 0)[1].tolist()))
        assert black_cols == [c - 1, c]

    def test_art_limits_palette(self):
        rng = np.random.default_rng(4)
        img = (rng.random((64, 64, 3)) * 255).astype(np.uint8)
        out = style_transform(img, StyleTag.ART)
        assert out.shape == img.shape and out.dtype == np.uint8
        distinct = {tuple(px) for px in out.reshape(-1, 3)}
        assert len(distinct) <= 8

    def test_art_changes_hue(self):
        img = np.zeros((16, 16, 3), dtype=np.uint8)
        img[..., 0] = 200  # pure red
        out = style_transform(img, StyleTag.ART)
        assert not np.array_equal(out, img)

    def test_text_tag_unsupported(self):
        with pytest.raises(UnsupportedTransformError):
            style_transform(np.zeros((8, 8, 3), dtype=np.uint8), StyleTag.TEXT)

    def test_output_shapes_match_input(self):
        rng = np.random.default_rng(5)
        img = (rng.random((64, 64, 3)) * 255).astype(np.uint8)
        for tag in (StyleTag.SKETCH, StyleTag.ART, StyleTag.LOWRES):
            out = style_transform(img, tag)
            assert out.shape == (64, 64, 3)
            assert out.dtype == np.uint8

    def test_transforms_deterministic(self):
        rng = np.random.default_rng(6)
        img = (rng.random((64, 64, 3)) * 255).astype(np.uint8)
        for tag in (StyleTag.SKETCH, StyleTag.ART, StyleTag.LOWRES):
            np.testing.assert_array_equal(style_transform(img, tag), style_transform(img, tag))


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    manifest = generate_synthetic_gallery(count=12, seed=11, output_dir=out)
    return manifest, load_manifest(manifest)


class TestSyntheticGallery:
    def test_deterministic_manifests(self, tmp_path):
        m1 = generate_synthetic_gallery(count=6, seed=3, output_dir=tmp_path / "a")
        m2 = generate_synthetic_gallery(count=6, seed=3, output_dir=tmp_path / "b")
        assert m1.read_bytes() == m2.read_bytes()
        img1 = (tmp_path / "a" / "images" / "g0000.png").read_bytes()
        img2 = (tmp_path / "b" / "images" / "g0000.png").read_bytes()
        assert img1 == img2

    def test_seed_changes_data(self, tmp_path):
        m1 = generate_synthetic_gallery(count=6, seed=3, output_dir=tmp_path / "a")
        m2 = generate_synthetic_gallery(count=6, seed=4, output_dir=tmp_path / "b")
        assert m1.read_bytes() != m2.read_bytes()

    def test_four_query_styles_per_item(self, dataset):
        _, records = dataset
        by_id: dict[str, set] = {}
        for r in records:
            by_id.setdefault(r.gallery_id, set()).add(r.style)
        for styles in by_id.values():
            assert styles == {StyleTag.TEXT, StyleTag.SKETCH, StyleTag.ART, StyleTag.LOWRES}

    def test_queries_link_only_via_gallery_id(self, dataset):
        _, records = dataset
        for r in records:
            assert r.image_path == f"images/{r.gallery_id}.png"
            if r.query_path:
                assert r.query_path.endswith(f"{r.gallery_id}.png")

    def test_splits_disjoint_on_gallery_id(self, dataset):
        _, records = dataset
        train = {r.gallery_id for r in records if r.split == "train"}
        test = {r.gallery_id for r in records if r.split == "test"}
        assert train.isdisjoint(test)
        assert train and test

    def test_captions_follow_template(self, dataset):
        _, records = dataset
        for r in records:
            if r.style == StyleTag.TEXT:
                attrs = r.attributes
                assert r.text == CAPTION_TEMPLATE.format(
                    color=attrs["color"], shape=attrs["shape"], pose=attrs["pose"]
                )

    def test_attribute_coverage_at_200(self, tmp_path):
        manifest = generate_synthetic_gallery(count=200, seed=7, output_dir=tmp_path)
        records = load_manifest(manifest)
        combos = {
            (r.attributes["shape"], r.attributes["color"], r.attributes["pose"])
            for r in records
        }
        assert len(combos) >= 64

    def test_image_decode_and_preprocess(self, dataset):
        manifest, records = dataset
        img = load_image(manifest.parent / records[1].query_path, 64)
        assert img.shape == (64, 64, 3) and img.dtype == np.uint8
        x = preprocess(img, (0.5, 0.5, 0.5), (0.5, 0.5, 0.5))
        assert x.shape == (3, 64, 64) and x.dtype == np.float32
        assert x.min() >= -1.0 - 1e-6 and x.max() <= 1.0 + 1e-6

    def test_resize_on_mismatched_size(self, dataset):
        manifest, records = dataset
        img = load_image(manifest.parent / records[0].image_path, 32)
        assert img.shape == (32, 32, 3)
