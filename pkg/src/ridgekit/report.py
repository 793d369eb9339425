"""Figure rendering for overlays and score reports (Agg backend, file output)."""

from __future__ import annotations

from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import Rectangle

from .raster import RasterImage

_DPI = 100


def _imshow(ax, img: RasterImage, title: str):
    data = img.data if img.channels == 3 else img.plane(0)
    ax.imshow(data, cmap=None if img.channels == 3 else "gray", vmin=0, vmax=1)
    ax.set_title(title, fontsize=9)
    ax.set_axis_off()


def save_side_by_side(raw: RasterImage, enhanced: RasterImage, path) -> None:
    """Two-panel before/after comparison."""
    fig, axes = plt.subplots(1, 2, figsize=(raw.width / _DPI * 2.1, raw.height / _DPI + 0.4))
    _imshow(axes[0], raw, "input")
    _imshow(axes[1], enhanced, "enhanced")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_detection_overlay(
    image: RasterImage,
    detections: Sequence,
    path,
    response=None,
    pre_nms: Optional[Sequence] = None,
    annotations: Optional[Sequence] = None,
) -> None:
    """Detection stages on one canvas: image, response, proposals, final
    boxes, predicted mask.

    Panels with nothing to show are omitted; the detections panel renders
    the post-suppression boxes (green) and, when given, ground-truth boxes
    (dashed white); the last panel shows the union of predicted masks.
    """
    panels = [("input", None, None)]
    if response is not None:
        panels.append(("ridge response", response, None))
    if pre_nms is not None:
        panels.append(("proposals", None, pre_nms))
    panels.append(("detections", None, detections))
    mask_union = None
    for det in detections:
        if getattr(det, "mask", None) is not None:
            mask_union = det.mask if mask_union is None else (mask_union | det.mask)
    if mask_union is not None:
        panels.append(("predicted mask", mask_union.astype(float), None))

    fig, axes = plt.subplots(
        1, len(panels), figsize=(image.width / _DPI * 1.05 * len(panels), image.height / _DPI + 0.4)
    )
    if len(panels) == 1:
        axes = [axes]
    for ax, (title, resp, boxes) in zip(axes, panels):
        if resp is not None:
            ax.imshow(resp, cmap="magma", vmin=0, vmax=1)
            ax.set_title(title, fontsize=9)
            ax.set_axis_off()
            continue
        _imshow(ax, image, title)
        if boxes is not None:
            for det in boxes:
                b = det.box
                ax.add_patch(
                    Rectangle((b.x, b.y), b.w, b.h, fill=False, edgecolor="lime", linewidth=1.2)
                )
                ax.text(b.x, max(b.y - 3, 0), f"{det.score:.2f}", color="lime", fontsize=7)
            if annotations:
                for ann in annotations:
                    b = ann.box
                    ax.add_patch(
                        Rectangle(
                            (b.x, b.y), b.w, b.h,
                            fill=False, edgecolor="white", linestyle="--", linewidth=1.0,
                        )
                    )
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_metrics_figure(report_doc: dict, path) -> None:
    """Bar chart of the object- and pixel-level rates from a score report."""
    names = ["precision", "recall", "f1", "image_accuracy"]
    values = [report_doc[n] for n in names]
    pixel = report_doc.get("pixel") or {}
    for key in ("sensitivity", "specificity", "ppv", "npv"):
        if key in pixel:
            names.append(f"px {key}")
            values.append(pixel[key])

    fig, ax = plt.subplots(figsize=(1.0 + 0.9 * len(names), 3.2))
    bars = ax.bar(range(len(names)), values, color="#3b73b9")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("value")
    for bar, value in zip(bars, values):
        ax.text(bar.get_x() + bar.get_width() / 2, value + 0.02, f"{value:.2f}",
                ha="center", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
