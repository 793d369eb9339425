"""Predictions-file contract shared with the ridgekit toolkit.

The adapter talks to the toolkit only through this file format, so the
schema is implemented here independently rather than imported:

    {"schema_version": 1, "mode": str?,
     "predictions": [{"image_id": str, "box": [x, y, w, h], "score": float,
                      "mask_rle": [int, ...]?, "label": str}]}

Boxes use a top-left origin in original-image pixels.  Masks are run-length
encoded column-major as alternating 0-run/1-run counts starting with a
(possibly zero-length) 0-run, totalling exactly width * height.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Prediction:
    image_id: str
    box: tuple[float, float, float, float]  # x, y, w, h
    score: float
    mask: Optional[np.ndarray] = None  # bool (H, W) in original-image pixels
    label: str = "ridge"


def rle_encode(mask: np.ndarray) -> list[int]:
    flat = np.asarray(mask, dtype=bool).flatten(order="F")
    if flat.size == 0:
        return []
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def write_predictions(records: Sequence[Prediction], path, mode: Optional[str] = None) -> None:
    doc: dict = {"schema_version": SCHEMA_VERSION}
    if mode is not None:
        doc["mode"] = mode
    doc["predictions"] = [
        {
            "image_id": r.image_id,
            "box": [float(v) for v in r.box],
            "score": float(r.score),
            **({"mask_rle": rle_encode(r.mask)} if r.mask is not None else {}),
            "label": r.label,
        }
        for r in records
    ]
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
