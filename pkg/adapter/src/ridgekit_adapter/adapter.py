"""Batch inference wrapper around torchvision Mask R-CNN variants.

Images are resized to a fixed working resolution, pushed through the model,
and detections are mapped back to original-image pixel coordinates before
export, so downstream scoring never sees the working resolution.

Fine-tuning is out of scope here; for comparable fundus datasets the usual
starting recipe is SGD with momentum 0.9, learning rate 0.001, around 100
epochs from an ImageNet-initialized backbone.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn as nn
from PIL import Image
from torchvision.models.detection import MaskRCNN
from torchvision.models.detection.anchor_utils import AnchorGenerator
from torchvision.models.detection.backbone_utils import resnet_fpn_backbone
from torchvision.ops import MultiScaleRoIAlign

from .interchange import Prediction, write_predictions

DEFAULT_RESIZE = (1024, 800)  # (width, height)
MASK_BINARIZE_THRESHOLD = 0.5


class AdapterError(Exception):
    """Fatal adapter failure (bad config, unloadable model)."""


@dataclass(frozen=True)
class AdapterConfig:
    weights: str
    arch: str = "maskrcnn_resnet101_fpn"
    score_thresh: float = 0.5
    resize: tuple[int, int] = DEFAULT_RESIZE
    device: str = "cpu"
    num_classes: int = 2  # background + ridge

    def __post_init__(self):
        if not 0.0 <= self.score_thresh <= 1.0:
            raise AdapterError("score_thresh must lie in [0, 1]")
        if self.resize[0] < 32 or self.resize[1] < 32:
            raise AdapterError("resize target must be at least 32x32")
        if self.arch not in ARCHITECTURES:
            raise AdapterError(f"unknown arch {self.arch!r}; choose from {sorted(ARCHITECTURES)}")


def _transform_sizes(resize: tuple[int, int]) -> dict:
    # Pin torchvision's internal transform to identity at the working size.
    return {"min_size": min(resize), "max_size": max(resize)}


def _resnet_maskrcnn(depth: str) -> Callable[[AdapterConfig], MaskRCNN]:
    def build(cfg: AdapterConfig) -> MaskRCNN:
        backbone = resnet_fpn_backbone(backbone_name=depth, weights=None)
        return MaskRCNN(backbone, num_classes=cfg.num_classes, **_transform_sizes(cfg.resize))

    return build


def _tiny_maskrcnn(cfg: AdapterConfig) -> MaskRCNN:
    # Minimal backbone for tests and smoke runs; same detection machinery.
    backbone = nn.Sequential(
        nn.Conv2d(3, 16, 3, stride=2, padding=1),
        nn.ReLU(),
        nn.Conv2d(16, 32, 3, stride=2, padding=1),
        nn.ReLU(),
        nn.Conv2d(32, 32, 3, stride=2, padding=1),
        nn.ReLU(),
    )
    backbone.out_channels = 32
    return MaskRCNN(
        backbone,
        num_classes=cfg.num_classes,
        rpn_anchor_generator=AnchorGenerator(
            sizes=((32, 64, 128),), aspect_ratios=((0.5, 1.0, 2.0),)
        ),
        box_roi_pool=MultiScaleRoIAlign(featmap_names=["0"], output_size=7, sampling_ratio=2),
        mask_roi_pool=MultiScaleRoIAlign(featmap_names=["0"], output_size=14, sampling_ratio=2),
        **_transform_sizes(cfg.resize),
    )


ARCHITECTURES: dict[str, Callable[[AdapterConfig], MaskRCNN]] = {
    "maskrcnn_resnet101_fpn": _resnet_maskrcnn("resnet101"),
    "maskrcnn_resnet50_fpn": _resnet_maskrcnn("resnet50"),
    "tiny": _tiny_maskrcnn,
}


def load_model(cfg: AdapterConfig) -> MaskRCNN:
    """Build the architecture and load weights; any failure is fatal."""
    model = ARCHITECTURES[cfg.arch](cfg)
    path = Path(cfg.weights)
    if not path.exists():
        raise AdapterError(f"weights file not found: {path}")
    try:
        state = torch.load(path, map_location=cfg.device, weights_only=True)
        model.load_state_dict(state)
    except (RuntimeError, ValueError, KeyError) as exc:
        raise AdapterError(f"cannot load weights from {path}: {exc}") from exc
    model.to(cfg.device)
    model.eval()
    return model


def scale_box_to_original(
    box_xyxy: Sequence[float], resized: tuple[int, int], original: tuple[int, int]
) -> tuple[float, float, float, float]:
    """Map an xyxy box at the working resolution to xywh original pixels."""
    sx = original[0] / resized[0]
    sy = original[1] / resized[1]
    x1, y1, x2, y2 = box_xyxy
    x = min(max(x1 * sx, 0.0), original[0])
    y = min(max(y1 * sy, 0.0), original[1])
    w = min(x2 * sx, original[0]) - x
    h = min(y2 * sy, original[1]) - y
    return x, y, w, h


def _load_resized(path: Path, resize: tuple[int, int]) -> tuple[torch.Tensor, tuple[int, int]]:
    with Image.open(path) as im:
        im = im.convert("RGB")
        original = im.size  # (width, height)
        resized = im.resize(resize, Image.BILINEAR)
    array = np.asarray(resized, dtype=np.float32) / 255.0
    return torch.from_numpy(array).permute(2, 0, 1), original


def _mask_to_original(mask: torch.Tensor, original: tuple[int, int]) -> np.ndarray:
    binary = (mask >= MASK_BINARIZE_THRESHOLD).to(torch.uint8)
    resized = torch.nn.functional.interpolate(
        binary[None, None].float(), size=(original[1], original[0]), mode="nearest"
    )[0, 0]
    return resized.numpy() >= 0.5


def infer_image(model: MaskRCNN, path, cfg: AdapterConfig) -> list[Prediction]:
    """Detections for one image, in original-image pixel coordinates."""
    path = Path(path)
    tensor, original = _load_resized(path, cfg.resize)
    with torch.no_grad():
        output = model([tensor.to(cfg.device)])[0]
    predictions = []
    for box, score, mask in zip(
        output["boxes"].cpu(), output["scores"].cpu(), output["masks"].cpu()
    ):
        if float(score) < cfg.score_thresh:
            continue
        x, y, w, h = scale_box_to_original(box.tolist(), cfg.resize, original)
        if w < 0.5 or h < 0.5:
            continue  # degenerate after clipping; schema requires w, h > 0
        predictions.append(
            Prediction(
                image_id=path.stem,
                box=(x, y, w, h),
                score=min(float(score), 1.0),
                mask=_mask_to_original(mask[0], original),
            )
        )
    return predictions


def infer_and_export(
    image_paths: Sequence, cfg: AdapterConfig, out_path, log=None
) -> tuple[int, list[str]]:
    """Run the batch and write predictions JSON.

    Returns (records written, list of failed image paths).  Per-image
    failures are logged and skipped; only model loading is fatal.
    """
    model = load_model(cfg)
    records: list[Prediction] = []
    failed: list[str] = []
    for path in image_paths:
        try:
            found = infer_image(model, path, cfg)
        except (OSError, RuntimeError, ValueError) as exc:
            failed.append(str(path))
            if log is not None:
                log(event="infer", file=str(path), status="error", error=str(exc))
            continue
        records.extend(found)
        if log is not None:
            log(event="infer", file=str(path), status="ok", detections=len(found))
    write_predictions(records, out_path, mode="adapter")
    return len(records), failed
