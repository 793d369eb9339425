import json
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ridgekit.annot_io import (
    AnnotationRecord,
    DatasetManifest,
    ManifestEntry,
    PredictionRecord,
    load_manifest,
    load_predictions,
    mask_bbox,
    rle_decode,
    rle_encode,
    save_manifest,
    save_predictions,
)
from ridgekit.errors import FormatError, InvalidInputError
from ridgekit.postprocess import Box

DOCS = Path(__file__).resolve().parent.parent / "docs"


class TestRle:
    def test_all_zero_mask(self):
        assert rle_encode(np.zeros((2, 2), dtype=bool)) == [4]

    def test_top_left_only(self):
        mask = np.zeros((2, 2), dtype=bool)
        mask[0, 0] = True
        assert rle_encode(mask) == [0, 1, 3]

    def test_all_ones(self):
        assert rle_encode(np.ones((3, 2), dtype=bool)) == [0, 6]

    def test_decode_examples(self):
        assert not rle_decode([4], 2, 2).any()
        mask = rle_decode([0, 1, 3], 2, 2)
        assert mask[0, 0] and mask.sum() == 1

    @given(hnp.arrays(dtype=bool, shape=hnp.array_shapes(min_dims=2, max_dims=2, max_side=24)))
    def test_round_trip(self, mask):
        h, w = mask.shape
        runs = rle_encode(mask)
        assert all(r >= 0 for r in runs)
        assert sum(runs) == w * h
        assert np.array_equal(rle_decode(runs, w, h), mask)

    def test_total_mismatch_rejected(self):
        with pytest.raises(FormatError):
            rle_decode([3], 2, 2)

    def test_negative_run_rejected(self):
        with pytest.raises(FormatError):
            rle_decode([-1, 5], 2, 2)


def make_manifest():
    mask_a = np.zeros((6, 8), dtype=bool)
    mask_a[1:4, 2:6] = True
    mask_b = np.zeros((6, 8), dtype=bool)
    mask_b[4:6, 0:3] = True
    return DatasetManifest(
        split="test",
        images=(
            ManifestEntry(
                image_id="img-a",
                path="img-a.png",
                width=8,
                height=6,
                annotations=(
                    AnnotationRecord(image_id="img-a", box=mask_bbox(mask_a), mask=mask_a),
                ),
            ),
            ManifestEntry(
                image_id="img-b",
                path="img-b.png",
                width=8,
                height=6,
                annotations=(
                    AnnotationRecord(image_id="img-b", box=mask_bbox(mask_b), mask=mask_b),
                ),
            ),
        ),
    )


class TestManifest:
    def test_round_trip(self, tmp_path):
        manifest = make_manifest()
        path = tmp_path / "manifest.json"
        save_manifest(manifest, path)
        loaded = load_manifest(path)
        assert loaded.split == manifest.split
        assert len(loaded.images) == 2
        for got, want in zip(loaded.images, manifest.images):
            assert (got.image_id, got.path, got.width, got.height) == (
                want.image_id,
                want.path,
                want.width,
                want.height,
            )
            for ga, wa in zip(got.annotations, want.annotations):
                assert ga.box == wa.box
                assert np.array_equal(ga.mask, wa.mask)
                assert ga.label == wa.label

    def test_duplicate_image_ids_rejected(self):
        entry = ManifestEntry(image_id="x", path="x.png", width=2, height=2)
        with pytest.raises(InvalidInputError):
            DatasetManifest(split="test", images=(entry, entry))

    def test_missing_field_names_location(self, tmp_path):
        doc = {
            "schema_version": 1,
            "split": "test",
            "images": [{"image_id": "a", "path": "a.png", "width": 4, "annotations": []}],
        }
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match=r"images\[0\].height"):
            load_manifest(path)

    def test_bad_type_reported(self, tmp_path):
        doc = {
            "schema_version": 1,
            "split": "test",
            "images": [
                {"image_id": "a", "path": "a.png", "width": "4", "height": 4, "annotations": []}
            ],
        }
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match=r"images\[0\].width"):
            load_manifest(path)

    def test_unknown_field_warns(self, tmp_path):
        doc = {
            "schema_version": 1,
            "split": "test",
            "images": [],
            "comment": "extra",
        }
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        with pytest.warns(UserWarning, match="comment"):
            load_manifest(path)

    def test_wrong_schema_version_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"schema_version": 2, "split": "t", "images": []}))
        with pytest.raises(FormatError, match="schema_version"):
            load_manifest(path)

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{nope")
        with pytest.raises(FormatError):
            load_manifest(path)

    def test_bad_rle_total_reported_with_index(self, tmp_path):
        doc = {
            "schema_version": 1,
            "split": "test",
            "images": [
                {
                    "image_id": "a",
                    "path": "a.png",
                    "width": 4,
                    "height": 4,
                    "annotations": [{"box": [0, 0, 2, 2], "mask_rle": [5], "label": "ridge"}],
                }
            ],
        }
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match=r"annotations\[0\].mask_rle"):
            load_manifest(path)


class TestPredictions:
    def test_round_trip_with_manifest(self, tmp_path):
        manifest = make_manifest()
        mask = np.zeros((6, 8), dtype=bool)
        mask[2:5, 3:7] = True
        records = [
            PredictionRecord(image_id="img-a", box=Box(3, 2, 4, 3), score=0.75, mask=mask),
            PredictionRecord(image_id="img-b", box=Box(0, 0, 2, 2), score=0.5),
        ]
        path = tmp_path / "preds.json"
        save_predictions(records, path)
        loaded = load_predictions(path, manifest=manifest)
        assert len(loaded) == 2
        assert loaded[0].score == 0.75
        assert np.array_equal(loaded[0].mask, mask)
        assert loaded[1].mask is None

    def test_round_trip_without_manifest_keeps_rle(self, tmp_path):
        mask = np.zeros((6, 8), dtype=bool)
        mask[0, 0] = True
        records = [PredictionRecord(image_id="img-a", box=Box(0, 0, 1, 1), score=1.0, mask=mask)]
        path = tmp_path / "preds.json"
        save_predictions(records, path)
        loaded = load_predictions(path)
        assert loaded[0].mask is None
        assert loaded[0].mask_rle == tuple(rle_encode(mask))
        path2 = tmp_path / "again.json"
        save_predictions(loaded, path2)
        assert json.loads(path.read_text()) == json.loads(path2.read_text())

    def test_dangling_image_id_names_it(self, tmp_path):
        records = [PredictionRecord(image_id="ghost", box=Box(0, 0, 1, 1), score=0.5)]
        path = tmp_path / "preds.json"
        save_predictions(records, path)
        with pytest.raises(FormatError, match="ghost"):
            load_predictions(path, manifest=make_manifest())

    def test_score_out_of_range_rejected(self, tmp_path):
        path = tmp_path / "preds.json"
        path.write_text(
            json.dumps(
                {
                    "schema_version": 1,
                    "predictions": [
                        {"image_id": "a", "box": [0, 0, 1, 1], "score": 1.5, "label": "ridge"}
                    ],
                }
            )
        )
        with pytest.raises(FormatError, match=r"predictions\[0\].score"):
            load_predictions(path)

    def test_mode_field_is_known(self, tmp_path):
        path = tmp_path / "preds.json"
        save_predictions([], path, mode="raw")
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert load_predictions(path) == []


class TestDocsSamples:
    def test_sample_manifest_parses_without_warnings(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            manifest = load_manifest(DOCS / "sample_manifest.json")
        assert manifest.image_ids == {"sample-001", "sample-002"}
        ann = manifest.images[0].annotations[0]
        assert ann.box == mask_bbox(ann.mask)

    def test_sample_predictions_parse_without_warnings(self):
        manifest = load_manifest(DOCS / "sample_manifest.json")
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            preds = load_predictions(DOCS / "sample_predictions.json", manifest=manifest)
        assert len(preds) == 2
        assert preds[0].mask is not None
