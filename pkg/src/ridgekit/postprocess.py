"""Box geometry: intersection-over-union and non-maximum suppression."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import InvalidInputError


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, top-left origin, x rightward, y downward, w/h > 0."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise InvalidInputError("box width and height must be positive")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


def iou(a: Box, b: Box) -> float:
    """area(a ∩ b) / area(a ∪ b); 0 for disjoint boxes."""
    ix = max(a.x, b.x)
    iy = max(a.y, b.y)
    iw = min(a.x + a.w, b.x + b.w) - ix
    ih = min(a.y + a.h, b.y + b.h) - iy
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # (x+w)-x can overshoot w in floating point; keep the ratio in [0, 1]
    return min(1.0, inter / (a.area + b.area - inter))


def nms(dets: Sequence, thresh: float) -> list:
    """Greedy suppression: keep the best-scoring box, drop overlaps above thresh.

    Candidates are visited by descending score, ties broken by lower (y, x)
    of the box. A remaining detection is removed when its IoU with an emitted
    one is strictly greater than ``thresh``. Output order is emission order;
    detections are returned unmodified.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].box.y, dets[i].box.x))
    kept: list[int] = []
    suppressed = [False] * len(dets)
    for i in order:
        if suppressed[i]:
            continue
        kept.append(i)
        for j in order:
            if j != i and not suppressed[j] and iou(dets[i].box, dets[j].box) > thresh:
                suppressed[j] = True
    return [dets[i] for i in kept]
