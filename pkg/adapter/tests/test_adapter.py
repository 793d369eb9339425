import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import torch

from ridgekit_adapter.adapter import (
    AdapterConfig,
    AdapterError,
    ARCHITECTURES,
    infer_and_export,
    load_model,
    scale_box_to_original,
)
from ridgekit_adapter.interchange import Prediction, rle_encode, write_predictions

RESIZE = (256, 224)  # small working resolution keeps CPU inference quick


def run_primary(*args, timeout=600):
    return subprocess.run(
        [sys.executable, "-m", "ridgekit.cli", *map(str, args)],
        capture_output=True,
        text=True,
        timeout=timeout,
    )


def run_adapter(*args, timeout=600):
    return subprocess.run(
        [sys.executable, "-m", "ridgekit_adapter.cli", *map(str, args)],
        capture_output=True,
        text=True,
        timeout=timeout,
    )


@pytest.fixture(scope="session")
def weights_path(tmp_path_factory):
    torch.manual_seed(0)
    cfg = AdapterConfig(weights="unused", arch="tiny", resize=RESIZE)
    model = ARCHITECTURES["tiny"](cfg)
    path = tmp_path_factory.mktemp("weights") / "tiny.pth"
    torch.save(model.state_dict(), path)
    return path


@pytest.fixture(scope="session")
def sample_images(tmp_path_factory):
    out = tmp_path_factory.mktemp("samples")
    proc = run_primary(
        "phantom", "--out", out, "-n", "3", "--seed", "900",
        "--width", "320", "--height", "256", "--blur", "0.8", "--contrast-factor", "0.7",
    )
    assert proc.returncode == 0, proc.stderr
    images = sorted(out.glob("phantom-*.png"))
    images = [p for p in images if "_vessels" not in p.name]
    assert len(images) == 3
    return out, images


class TestScaleBox:
    def test_round_trip_within_pixel(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            ow, oh = int(rng.integers(200, 2100)), int(rng.integers(200, 2100))
            x1, y1 = rng.uniform(0, ow - 10), rng.uniform(0, oh - 10)
            x2, y2 = rng.uniform(x1 + 1, ow), rng.uniform(y1 + 1, oh)
            # original -> 1024x800 working coords -> back
            fx, fy = 1024 / ow, 800 / oh
            working = (x1 * fx, y1 * fy, x2 * fx, y2 * fy)
            x, y, w, h = scale_box_to_original(working, (1024, 800), (ow, oh))
            assert abs(x - x1) <= 1.0 and abs(y - y1) <= 1.0
            assert abs(x + w - x2) <= 1.0 and abs(y + h - y2) <= 1.0

    def test_clips_to_original_bounds(self):
        x, y, w, h = scale_box_to_original((-5.0, -3.0, 2000.0, 1000.0), (1024, 800), (640, 480))
        assert x >= 0 and y >= 0
        assert x + w <= 640 and y + h <= 480


class TestModelLoading:
    def test_missing_weights_fatal(self):
        cfg = AdapterConfig(weights="/nonexistent/w.pth", arch="tiny", resize=RESIZE)
        with pytest.raises(AdapterError, match="not found"):
            load_model(cfg)

    def test_mismatched_weights_fatal(self, tmp_path):
        bad = tmp_path / "bad.pth"
        torch.save({"stray.weight": torch.zeros(3)}, bad)
        cfg = AdapterConfig(weights=str(bad), arch="tiny", resize=RESIZE)
        with pytest.raises(AdapterError, match="cannot load"):
            load_model(cfg)

    def test_bad_config_rejected(self):
        with pytest.raises(AdapterError):
            AdapterConfig(weights="w", score_thresh=1.5)
        with pytest.raises(AdapterError):
            AdapterConfig(weights="w", arch="mystery")


class TestInterchange:
    def test_rle_convention(self):
        mask = np.zeros((2, 2), dtype=bool)
        assert rle_encode(mask) == [4]
        mask[0, 0] = True
        assert rle_encode(mask) == [0, 1, 3]

    def test_empty_predictions_valid_json(self, tmp_path):
        path = tmp_path / "empty.json"
        write_predictions([], path)
        doc = json.loads(path.read_text())
        assert doc == {"schema_version": 1, "predictions": []}

    def test_mask_rle_total_covers_image(self, tmp_path):
        mask = np.random.default_rng(1).random((24, 30)) > 0.5
        path = tmp_path / "p.json"
        write_predictions(
            [Prediction(image_id="x", box=(0, 0, 5, 5), score=0.9, mask=mask)], path
        )
        doc = json.loads(path.read_text())
        assert sum(doc["predictions"][0]["mask_rle"]) == 24 * 30


class TestInferAndExport:
    def test_emits_schema_valid_in_bounds_predictions(self, weights_path, sample_images, tmp_path):
        sample_dir, images = sample_images
        out_path = tmp_path / "preds.json"
        cfg = AdapterConfig(
            weights=str(weights_path), arch="tiny", resize=RESIZE, score_thresh=0.5
        )
        written, failed = infer_and_export(images, cfg, out_path)
        assert failed == []
        doc = json.loads(out_path.read_text())
        assert doc["schema_version"] == 1
        assert isinstance(doc["predictions"], list)
        assert written == len(doc["predictions"])
        ids = {p.stem for p in images}
        for record in doc["predictions"]:
            assert record["image_id"] in ids
            assert record["label"] == "ridge"
            assert 0.5 <= record["score"] <= 1.0
            x, y, w, h = record["box"]
            assert w > 0 and h > 0
            assert x >= 0 and y >= 0
            assert x + w <= 320 + 1e-6 and y + h <= 256 + 1e-6  # original pixels
            assert sum(record["mask_rle"]) == 320 * 256

    def test_per_image_failure_logged_and_skipped(self, weights_path, sample_images, tmp_path):
        _, images = sample_images
        bad = tmp_path / "broken.png"
        bad.write_text("nope")
        events = []
        cfg = AdapterConfig(weights=str(weights_path), arch="tiny", resize=RESIZE)
        _, failed = infer_and_export(
            [images[0], bad], cfg, tmp_path / "preds.json", log=lambda **kw: events.append(kw)
        )
        assert failed == [str(bad)]
        assert any(e["status"] == "error" for e in events)
        assert json.loads((tmp_path / "preds.json").read_text())["schema_version"] == 1

    def test_threshold_one_gives_empty_list(self, weights_path, sample_images, tmp_path):
        _, images = sample_images
        cfg = AdapterConfig(
            weights=str(weights_path), arch="tiny", resize=RESIZE, score_thresh=1.0
        )
        written, failed = infer_and_export(images[:1], cfg, tmp_path / "preds.json")
        assert (written, failed) == (0, [])
        assert json.loads((tmp_path / "preds.json").read_text())["predictions"] == []


class TestPrimaryContract:
    def test_cli_output_scored_by_primary(self, weights_path, sample_images, tmp_path):
        sample_dir, images = sample_images
        preds = tmp_path / "preds.json"
        proc = run_adapter(
            "--weights", weights_path, "--arch", "tiny",
            "--images", *images, "--out", preds,
            "--resize", f"{RESIZE[0]}x{RESIZE[1]}", "--score-thresh", "0.5",
        )
        assert proc.returncode == 0, proc.stderr
        score = run_primary(
            "score", "--manifest", sample_dir / "manifest.json",
            "--predictions", preds, "--out", tmp_path / "score",
        )
        assert score.returncode == 0, score.stderr
        doc = json.loads((tmp_path / "score" / "metrics.json").read_text())
        for key in ("precision", "recall", "f1", "image_accuracy"):
            assert 0.0 <= doc[key] <= 1.0

    def test_fatal_exit_code_for_bad_weights(self, sample_images, tmp_path):
        _, images = sample_images
        proc = run_adapter(
            "--weights", tmp_path / "missing.pth", "--arch", "tiny",
            "--images", images[0], "--out", tmp_path / "p.json",
        )
        assert proc.returncode == 1
        events = [json.loads(l) for l in proc.stderr.splitlines() if l.strip()]
        assert events[-1]["status"] == "fatal"
