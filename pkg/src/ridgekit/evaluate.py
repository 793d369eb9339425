"""Scoring protocol: detection-to-truth matching plus object and pixel metrics.

Matching is greedy per image: predictions are visited by descending score
and each takes the unmatched ground truth with the highest IoU, provided
that IoU reaches the threshold.  Matched pairs are true positives, leftover
predictions false positives, leftover ground truths false negatives.

Object-level specificity is deliberately not computed: detection has no
true negatives.  Specificity appears only in the pixel-level metrics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidInputError
from .postprocess import iou

DEFAULT_MATCH_IOU = 0.5


@dataclass(frozen=True)
class ImageMatches:
    """Matching outcome for one image; indices refer to the input lists."""

    image_id: str
    pairs: tuple[tuple[int, int, float], ...]  # (pred_idx, gt_idx, iou)
    unmatched_preds: tuple[int, ...]
    unmatched_gts: tuple[int, ...]
    top_pred_is_tp: Optional[bool]  # None when the image has no predictions

    @property
    def tp(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class MatchReport:
    images: tuple[ImageMatches, ...]
    tp: int
    fp: int
    fn: int

    def top_tp_flags(self) -> list[bool]:
        """Per-image success flags: the top-scoring prediction matched."""
        return [bool(m.top_pred_is_tp) for m in self.images]


@dataclass(frozen=True)
class ObjectMetrics:
    precision: float
    recall: float
    f1: float
    image_accuracy: float


@dataclass(frozen=True)
class PixelMetrics:
    tp: int
    fp: int
    fn: int
    tn: int
    sensitivity: float
    specificity: float
    ppv: float
    npv: float


@dataclass(frozen=True)
class PixelMetricsSummary:
    """Macro-averaged pixel rates over a set of images."""

    sensitivity: float
    specificity: float
    ppv: float
    npv: float
    images: int


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def match_detections(preds: Sequence, gts: Sequence, iou_thresh: float = DEFAULT_MATCH_IOU) -> MatchReport:
    """Greedy score-ordered matching across all images present in the inputs.

    ``preds`` and ``gts`` may mix image ids; matching runs independently per
    image.  Prediction order within equal scores is stable; IoU ties take
    the lowest ground-truth index.
    """
    image_ids: list[str] = []
    for rec in list(gts) + list(preds):
        if rec.image_id not in image_ids:
            image_ids.append(rec.image_id)

    images = []
    total_tp = total_fp = total_fn = 0
    for image_id in image_ids:
        p_idx = [i for i, p in enumerate(preds) if p.image_id == image_id]
        g_idx = [j for j, g in enumerate(gts) if g.image_id == image_id]
        order = sorted(p_idx, key=lambda i: -preds[i].score)
        taken: set[int] = set()
        pairs = []
        matched_preds: set[int] = set()
        for i in order:
            best_j = -1
            best_iou = 0.0
            for j in g_idx:
                if j in taken:
                    continue
                value = iou(preds[i].box, gts[j].box)
                if value > best_iou:
                    best_iou = value
                    best_j = j
            if best_j >= 0 and best_iou >= iou_thresh:
                taken.add(best_j)
                matched_preds.add(i)
                pairs.append((i, best_j, best_iou))
        unmatched_preds = tuple(i for i in order if i not in matched_preds)
        unmatched_gts = tuple(j for j in g_idx if j not in taken)
        top_is_tp = (order[0] in matched_preds) if order else None
        images.append(
            ImageMatches(
                image_id=image_id,
                pairs=tuple(pairs),
                unmatched_preds=unmatched_preds,
                unmatched_gts=unmatched_gts,
                top_pred_is_tp=top_is_tp,
            )
        )
        total_tp += len(pairs)
        total_fp += len(unmatched_preds)
        total_fn += len(unmatched_gts)
    return MatchReport(images=tuple(images), tp=total_tp, fp=total_fp, fn=total_fn)


def object_metrics(report: MatchReport, per_image: Optional[Sequence[bool]] = None) -> ObjectMetrics:
    """Precision, recall, F1 and per-image detection accuracy.

    ``per_image`` holds one flag per image (top-scoring detection was a true
    positive); by default it is derived from the report.  Images without
    predictions count as failures.
    """
    if per_image is None:
        per_image = report.top_tp_flags()
    precision = _ratio(report.tp, report.tp + report.fp)
    recall = _ratio(report.tp, report.tp + report.fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    accuracy = _ratio(sum(1 for ok in per_image if ok), len(per_image))
    return ObjectMetrics(precision=precision, recall=recall, f1=f1, image_accuracy=accuracy)


def pixel_metrics(pred_mask: np.ndarray, gt_mask: np.ndarray) -> PixelMetrics:
    """Per-pixel confusion counts and the four derived rates."""
    pred = np.asarray(pred_mask, dtype=bool)
    gt = np.asarray(gt_mask, dtype=bool)
    if pred.shape != gt.shape:
        raise InvalidInputError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    tn = int(np.count_nonzero(~pred & ~gt))
    return PixelMetrics(
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        sensitivity=_ratio(tp, tp + fn),
        specificity=_ratio(tn, tn + fp),
        ppv=_ratio(tp, tp + fp),
        npv=_ratio(tn, tn + fn),
    )


def aggregate_pixel_metrics(per_image: Sequence[PixelMetrics]) -> PixelMetricsSummary:
    """Unweighted (macro) mean of each rate across images."""
    if not per_image:
        raise InvalidInputError("cannot aggregate an empty list")
    n = len(per_image)
    return PixelMetricsSummary(
        sensitivity=sum(m.sensitivity for m in per_image) / n,
        specificity=sum(m.specificity for m in per_image) / n,
        ppv=sum(m.ppv for m in per_image) / n,
        npv=sum(m.npv for m in per_image) / n,
        images=n,
    )
