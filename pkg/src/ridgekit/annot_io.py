"""Dataset manifest, annotation/prediction interchange and mask RLE.

File schemas (JSON, ``schema_version`` 1):

manifest::

    {"schema_version": 1, "split": "train"|"test",
     "images": [{"image_id": str, "path": str, "width": int, "height": int,
                 "annotations": [{"box": [x, y, w, h],
                                  "mask_rle": [int, ...], "label": str}]}]}

predictions::

    {"schema_version": 1, "mode": str?,
     "predictions": [{"image_id": str, "box": [x, y, w, h], "score": float,
                      "mask_rle": [int, ...]?, "label": str}]}

Masks travel as column-major run-length counts of alternating 0-runs and
1-runs, starting with a (possibly empty) 0-run.  In memory masks are kept
as decoded boolean bitmaps; RLE exists only at the file boundary.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError, InvalidInputError
from .postprocess import Box

SCHEMA_VERSION = 1

RIDGE_LABEL = "ridge"


@dataclass(frozen=True)
class AnnotationRecord:
    """Ground-truth object: tight box plus binary mask over the image grid."""

    image_id: str
    box: Box
    mask: np.ndarray
    label: str = RIDGE_LABEL

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        mask.flags.writeable = False
        object.__setattr__(self, "mask", mask)


@dataclass(frozen=True)
class PredictionRecord:
    """Model output: box, confidence and optional mask.

    ``mask`` is the decoded bitmap when the image dimensions were known at
    load time; otherwise ``mask_rle`` carries the verbatim runs so a
    save/load cycle stays lossless.
    """

    image_id: str
    box: Box
    score: float
    mask: Optional[np.ndarray] = None
    mask_rle: Optional[tuple[int, ...]] = None
    label: str = RIDGE_LABEL

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise InvalidInputError("score must lie in [0, 1]")
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            mask.flags.writeable = False
            object.__setattr__(self, "mask", mask)
            object.__setattr__(self, "mask_rle", None)


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    path: str
    width: int
    height: int
    annotations: tuple[AnnotationRecord, ...] = ()


@dataclass(frozen=True)
class DatasetManifest:
    split: str
    images: tuple[ManifestEntry, ...] = ()

    def __post_init__(self):
        ids = [e.image_id for e in self.images]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("manifest image_ids must be unique")

    def entry(self, image_id: str) -> ManifestEntry:
        for e in self.images:
            if e.image_id == image_id:
                return e
        raise KeyError(image_id)

    @property
    def image_ids(self) -> set[str]:
        return {e.image_id for e in self.images}


def mask_bbox(mask: np.ndarray) -> Box:
    """Tight bounding box of a nonempty binary mask, in pixel units."""
    rows = np.any(mask, axis=1)
    cols = np.any(mask, axis=0)
    if not rows.any():
        raise InvalidInputError("cannot box an empty mask")
    r0, r1 = np.flatnonzero(rows)[[0, -1]]
    c0, c1 = np.flatnonzero(cols)[[0, -1]]
    return Box(x=float(c0), y=float(r0), w=float(c1 - c0 + 1), h=float(r1 - r0 + 1))


# ---------------------------------------------------------------------------
# Run-length encoding

def rle_encode(mask: np.ndarray) -> list[int]:
    """Column-major alternating run lengths, first run counts zeros."""
    flat = np.asarray(mask, dtype=bool).flatten(order="F")
    if flat.size == 0:
        return []
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_decode(rle: Sequence[int], w: int, h: int) -> np.ndarray:
    """Inverse of :func:`rle_encode`; rejects totals that do not cover w*h."""
    runs = [int(r) for r in rle]
    if any(r < 0 for r in runs):
        raise FormatError("RLE runs must be non-negative")
    total = sum(runs)
    if total != w * h:
        raise FormatError(f"RLE total {total} != {w}*{h}")
    flat = np.zeros(w * h, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return flat.reshape((h, w), order="F")


# ---------------------------------------------------------------------------
# JSON loading with schema validation

def _fail(kind: str, index, field_name: str, message: str):
    where = f"{kind}[{index}].{field_name}" if index is not None else f"{kind}.{field_name}"
    raise FormatError(f"{where}: {message}")


def _check_unknown(obj: dict, known: set[str], where: str):
    extra = set(obj) - known
    if extra:
        warnings.warn(f"{where}: ignoring unknown fields {sorted(extra)}", stacklevel=3)


def _parse_box(value, kind: str, index) -> Box:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 4
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        _fail(kind, index, "box", "expected [x, y, w, h] numbers")
    try:
        return Box(*(float(v) for v in value))
    except InvalidInputError as exc:
        _fail(kind, index, "box", str(exc))


def _parse_annotation(obj, image_index: int, ann_index: int, width: int, height: int) -> AnnotationRecord:
    kind = f"images[{image_index}].annotations"
    if not isinstance(obj, dict):
        _fail(kind, ann_index, "", "expected an object")
    _check_unknown(obj, {"box", "mask_rle", "label"}, f"{kind}[{ann_index}]")
    for name in ("box", "mask_rle", "label"):
        if name not in obj:
            _fail(kind, ann_index, name, "missing required field")
    box = _parse_box(obj["box"], kind, ann_index)
    if not isinstance(obj["mask_rle"], list):
        _fail(kind, ann_index, "mask_rle", "expected a list of run lengths")
    try:
        mask = rle_decode(obj["mask_rle"], width, height)
    except FormatError as exc:
        _fail(kind, ann_index, "mask_rle", str(exc))
    if not isinstance(obj["label"], str):
        _fail(kind, ann_index, "label", "expected a string")
    return AnnotationRecord(image_id="", box=box, mask=mask, label=obj["label"])


def _read_json(path) -> dict:
    path = Path(path)
    try:
        raw = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be an object")
    return doc


def _check_version(doc: dict, path):
    if "schema_version" not in doc:
        raise FormatError(f"{path}: missing schema_version")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise FormatError(f"{path}: unsupported schema_version {doc['schema_version']!r}")


def load_manifest(path) -> DatasetManifest:
    doc = _read_json(path)
    _check_version(doc, path)
    _check_unknown(doc, {"schema_version", "split", "images"}, "manifest")
    for name in ("split", "images"):
        if name not in doc:
            raise FormatError(f"manifest.{name}: missing required field")
    if not isinstance(doc["split"], str):
        raise FormatError("manifest.split: expected a string")
    if not isinstance(doc["images"], list):
        raise FormatError("manifest.images: expected a list")
    entries = []
    for i, img in enumerate(doc["images"]):
        if not isinstance(img, dict):
            _fail("images", i, "", "expected an object")
        _check_unknown(
            img, {"image_id", "path", "width", "height", "annotations"}, f"images[{i}]"
        )
        for name, typ in (
            ("image_id", str),
            ("path", str),
            ("width", int),
            ("height", int),
            ("annotations", list),
        ):
            if name not in img:
                _fail("images", i, name, "missing required field")
            if not isinstance(img[name], typ) or isinstance(img[name], bool):
                _fail("images", i, name, f"expected {typ.__name__}")
        anns = [
            _parse_annotation(a, i, j, img["width"], img["height"])
            for j, a in enumerate(img["annotations"])
        ]
        anns = [
            AnnotationRecord(image_id=img["image_id"], box=a.box, mask=a.mask, label=a.label)
            for a in anns
        ]
        entries.append(
            ManifestEntry(
                image_id=img["image_id"],
                path=img["path"],
                width=img["width"],
                height=img["height"],
                annotations=tuple(anns),
            )
        )
    return DatasetManifest(split=doc["split"], images=tuple(entries))


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "split": manifest.split,
        "images": [
            {
                "image_id": e.image_id,
                "path": e.path,
                "width": e.width,
                "height": e.height,
                "annotations": [
                    {
                        "box": a.box.as_list(),
                        "mask_rle": rle_encode(a.mask),
                        "label": a.label,
                    }
                    for a in e.annotations
                ],
            }
            for e in manifest.images
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_predictions(path, manifest: Optional[DatasetManifest] = None) -> list[PredictionRecord]:
    """Load predictions; with a manifest, image ids and mask sizes are checked."""
    doc = _read_json(path)
    _check_version(doc, path)
    _check_unknown(doc, {"schema_version", "predictions", "mode"}, "predictions")
    if "predictions" not in doc:
        raise FormatError("predictions.predictions: missing required field")
    if not isinstance(doc["predictions"], list):
        raise FormatError("predictions.predictions: expected a list")
    records = []
    for i, obj in enumerate(doc["predictions"]):
        if not isinstance(obj, dict):
            _fail("predictions", i, "", "expected an object")
        _check_unknown(obj, {"image_id", "box", "score", "mask_rle", "label"}, f"predictions[{i}]")
        for name in ("image_id", "box", "score", "label"):
            if name not in obj:
                _fail("predictions", i, name, "missing required field")
        if not isinstance(obj["image_id"], str):
            _fail("predictions", i, "image_id", "expected a string")
        if not isinstance(obj["label"], str):
            _fail("predictions", i, "label", "expected a string")
        score = obj["score"]
        if not isinstance(score, (int, float)) or isinstance(score, bool) or not 0 <= score <= 1:
            _fail("predictions", i, "score", "expected a number in [0, 1]")
        box = _parse_box(obj["box"], "predictions", i)
        mask = None
        raw_rle = None
        if "mask_rle" in obj:
            if not isinstance(obj["mask_rle"], list):
                _fail("predictions", i, "mask_rle", "expected a list of run lengths")
            if any((not isinstance(r, int)) or isinstance(r, bool) or r < 0 for r in obj["mask_rle"]):
                _fail("predictions", i, "mask_rle", "runs must be non-negative integers")
            if manifest is not None:
                entry = _entry_for(manifest, obj["image_id"], i)
                try:
                    mask = rle_decode(obj["mask_rle"], entry.width, entry.height)
                except FormatError as exc:
                    _fail("predictions", i, "mask_rle", str(exc))
            else:
                raw_rle = tuple(obj["mask_rle"])
        elif manifest is not None:
            _entry_for(manifest, obj["image_id"], i)
        records.append(
            PredictionRecord(
                image_id=obj["image_id"],
                box=box,
                score=float(score),
                mask=mask,
                mask_rle=raw_rle,
                label=obj["label"],
            )
        )
    return records


def _entry_for(manifest: DatasetManifest, image_id: str, index: int) -> ManifestEntry:
    try:
        return manifest.entry(image_id)
    except KeyError:
        _fail("predictions", index, "image_id", f"{image_id!r} not present in manifest")


def save_predictions(records: Sequence[PredictionRecord], path, mode: Optional[str] = None) -> None:
    """Write a predictions file; ``mode`` optionally notes the pipeline variant."""
    doc: dict = {"schema_version": SCHEMA_VERSION}
    if mode is not None:
        doc["mode"] = mode
    doc["predictions"] = [_prediction_to_json(r) for r in records]
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _prediction_to_json(r: PredictionRecord) -> dict:
    obj = {
        "image_id": r.image_id,
        "box": r.box.as_list(),
        "score": r.score,
        "label": r.label,
    }
    if r.mask is not None:
        obj["mask_rle"] = rle_encode(r.mask)
    elif r.mask_rle is not None:
        obj["mask_rle"] = list(r.mask_rle)
    return obj
