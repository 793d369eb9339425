"""Command-line front-end: enhance, phantom, detect and score subcommands.

Exit codes: 0 full success, 1 fatal error, 2 partial failure (some inputs
failed, the rest were processed).  Progress and errors go to stderr as
one-line JSON records so batch drivers can parse them.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import annot_io, report
from .detect import DetectorConfig, multiscale_ridge_map, propose_regions
from .enhance import EnhanceConfig, enhance_pipeline
from .errors import FormatError, InvalidInputError, RidgekitError
from .evaluate import (
    aggregate_pixel_metrics,
    match_detections,
    object_metrics,
    pixel_metrics,
)
from .phantom import DegradeSpec, PhantomSpec, RidgeArcSpec, generate_phantom_full
from .postprocess import nms
from .raster import RasterImage, load_image, rgb_to_yiq, save_image

DEFAULT_NMS_THRESH = 0.3
DEFAULT_MATCH_IOU = 0.5


def log_event(**fields) -> None:
    print(json.dumps(fields, sort_keys=True), file=sys.stderr, flush=True)


def _ensure_outdir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-probe"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise RidgekitError(f"output directory {path} is not writable: {exc}") from exc


# ---------------------------------------------------------------------------
# Shared flag groups

def _add_enhance_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("enhancement")
    group.add_argument("--config", help="flat key=value enhancement config file")
    group.add_argument("--clahe-tiles", metavar="RxC", help="tile grid, e.g. 8x8")
    group.add_argument("--clahe-clip", type=float)
    group.add_argument("--hist-bins", type=int)
    group.add_argument("--sigmoid-c", type=float)
    group.add_argument("--sigmoid-offset", type=float)
    group.add_argument("--fit-c", action="store_true", default=None,
                       help="fit the sigmoid slope by AMBE minimization")
    group.add_argument("--c-lo", type=float)
    group.add_argument("--c-hi", type=float)
    group.add_argument("--psf-sigma", type=float)
    group.add_argument("--psf-size", type=int)
    group.add_argument("--wiener-nsr", type=float)


def _enhance_config(args) -> EnhanceConfig:
    cfg = EnhanceConfig.from_file(args.config) if args.config else EnhanceConfig()
    kwargs = {}
    if args.clahe_tiles:
        rows, _, cols = args.clahe_tiles.partition("x")
        kwargs["clahe_tiles"] = (int(rows), int(cols))
    for flag, attr in (
        ("clahe_clip", "clahe_clip"),
        ("hist_bins", "hist_bins"),
        ("sigmoid_c", "sigmoid_c"),
        ("sigmoid_offset", "sigmoid_offset"),
        ("fit_c", "fit_c"),
        ("psf_sigma", "psf_sigma"),
        ("psf_size", "psf_size"),
        ("wiener_nsr", "wiener_nsr"),
    ):
        value = getattr(args, flag)
        if value is not None:
            kwargs[attr] = value
    lo = args.c_lo if args.c_lo is not None else cfg.c_search_range[0]
    hi = args.c_hi if args.c_hi is not None else cfg.c_search_range[1]
    kwargs["c_search_range"] = (lo, hi)
    return replace(cfg, **kwargs)


def _add_detector_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("detector")
    group.add_argument("--scales", help="comma-separated sigmas, e.g. 2,4,8")
    group.add_argument("--threshold-percentile", type=float)
    group.add_argument("--min-area", type=int)
    group.add_argument("--max-detections", type=int)
    group.add_argument("--nms-thresh", type=float, default=DEFAULT_NMS_THRESH)


def _detector_config(args) -> DetectorConfig:
    cfg = DetectorConfig()
    kwargs = {}
    if args.scales:
        kwargs["scales"] = tuple(float(s) for s in args.scales.split(","))
    for flag in ("threshold_percentile", "min_area", "max_detections"):
        value = getattr(args, flag)
        if value is not None:
            kwargs[flag] = value
    return replace(cfg, **kwargs)


# ---------------------------------------------------------------------------
# enhance

def _enhance_one(task):
    src, out_dir, cfg = task
    img = load_image(src)
    enhanced = enhance_pipeline(img, cfg)
    stem = Path(src).stem
    out_path = Path(out_dir) / f"{stem}_enhanced.png"
    save_image(enhanced, out_path)
    report.save_side_by_side(img, enhanced, Path(out_dir) / f"{stem}_compare.png")
    return str(out_path)


def cmd_enhance(args) -> int:
    out_dir = Path(args.out)
    _ensure_outdir(out_dir)
    cfg = _enhance_config(args)
    tasks = [(src, str(out_dir), cfg) for src in args.images]
    failures = 0
    for src, result in _run_tasks(_enhance_one, tasks, args.jobs, key=lambda t: t[0]):
        if isinstance(result, Exception):
            failures += 1
            log_event(event="enhance", file=src, status="error", error=str(result))
        else:
            log_event(event="enhance", file=src, status="ok", output=result)
    return 2 if failures else 0


def _run_tasks(fn, tasks, jobs, key):
    """Run tasks, optionally in a process pool; yields (key, result-or-error)."""
    if jobs <= 1 or len(tasks) <= 1:
        for task in tasks:
            try:
                yield key(task), fn(task)
            except (RidgekitError, OSError) as exc:
                yield key(task), exc
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [(key(task), pool.submit(fn, task)) for task in tasks]
        for task_key, fut in futures:
            try:
                yield task_key, fut.result()
            except (RidgekitError, OSError) as exc:
                yield task_key, exc


# ---------------------------------------------------------------------------
# phantom

def _phantom_spec_from_json(path) -> PhantomSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read phantom spec {path}: {exc}") from exc
    ridge = doc.get("ridge_arc", {})
    degrade = doc.get("degrade", {})
    try:
        return PhantomSpec(
            seed=doc.get("seed", 0),
            width=doc.get("width", 512),
            height=doc.get("height", 416),
            disc_center=tuple(doc.get("disc_center", (0.38, 0.50))),
            disc_radius=doc.get("disc_radius", 0.085),
            vessel_count=doc.get("vessel_count", 7),
            ridge_arc=RidgeArcSpec(
                center=tuple(ridge.get("center", (0.38, 0.50))),
                radius=ridge.get("radius", 0.34),
                angle_span=ridge.get("angle_span", 120.0),
                width=ridge.get("width", 8.0),
                contrast=ridge.get("contrast", 0.25),
            ),
            degrade=DegradeSpec(
                illum_gradient=degrade.get("illum_gradient", 0.0),
                blur_sigma=degrade.get("blur_sigma", 0.0),
                noise_sigma=degrade.get("noise_sigma", 0.0),
                contrast_factor=degrade.get("contrast_factor", 1.0),
            ),
        )
    except (TypeError, InvalidInputError) as exc:
        raise FormatError(f"invalid phantom spec {path}: {exc}") from exc


def _phantom_spec(args) -> PhantomSpec:
    spec = _phantom_spec_from_json(args.spec) if args.spec else PhantomSpec()
    kwargs = {}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    for flag in ("width", "height", "vessel_count"):
        value = getattr(args, flag)
        if value is not None:
            kwargs[flag] = value
    ridge_kwargs = {}
    for flag, attr in (
        ("ridge_radius", "radius"),
        ("ridge_span", "angle_span"),
        ("ridge_width", "width"),
        ("ridge_contrast", "contrast"),
    ):
        value = getattr(args, flag)
        if value is not None:
            ridge_kwargs[attr] = value
    if ridge_kwargs:
        kwargs["ridge_arc"] = replace(spec.ridge_arc, **ridge_kwargs)
    degrade_kwargs = {}
    for flag, attr in (
        ("illum_gradient", "illum_gradient"),
        ("blur", "blur_sigma"),
        ("noise", "noise_sigma"),
        ("contrast_factor", "contrast_factor"),
    ):
        value = getattr(args, flag)
        if value is not None:
            degrade_kwargs[attr] = value
    if degrade_kwargs:
        kwargs["degrade"] = replace(spec.degrade, **degrade_kwargs)
    return replace(spec, **kwargs)


def _phantom_one(task):
    spec, out_dir = task
    result = generate_phantom_full(spec)
    out = Path(out_dir)
    image_name = f"{spec.image_id}.png"
    save_image(result.image, out / image_name)
    vessels = result.vessel_mask.astype(np.float64)[:, :, None]
    save_image(RasterImage.from_array(vessels), out / f"{spec.image_id}_vessels.png")
    ann = result.annotation
    annotation_doc = {
        "schema_version": annot_io.SCHEMA_VERSION,
        "image_id": ann.image_id,
        "width": spec.width,
        "height": spec.height,
        "box": ann.box.as_list(),
        "mask_rle": annot_io.rle_encode(ann.mask),
        "label": ann.label,
    }
    (out / f"{spec.image_id}_annotation.json").write_text(
        json.dumps(annotation_doc, indent=2) + "\n"
    )
    entry = annot_io.ManifestEntry(
        image_id=ann.image_id,
        path=image_name,
        width=spec.width,
        height=spec.height,
        annotations=(ann,),
    )
    return entry


def cmd_phantom(args) -> int:
    out_dir = Path(args.out)
    _ensure_outdir(out_dir)
    base = _phantom_spec(args)
    specs = [replace(base, seed=base.seed + i) for i in range(args.count)]
    tasks = [(spec, str(out_dir)) for spec in specs]
    entries = {}
    failures = 0
    for spec_id, result in _run_tasks(_phantom_one, tasks, args.jobs, key=lambda t: t[0].image_id):
        if isinstance(result, Exception):
            failures += 1
            log_event(event="phantom", id=spec_id, status="error", error=str(result))
        else:
            entries[spec_id] = result
            log_event(event="phantom", id=spec_id, status="ok")
    ordered = [entries[s.image_id] for s in specs if s.image_id in entries]
    manifest = annot_io.DatasetManifest(split=args.split, images=tuple(ordered))
    annot_io.save_manifest(manifest, out_dir / "manifest.json")
    log_event(event="phantom", status="manifest", images=len(ordered))
    return 2 if failures else 0


# ---------------------------------------------------------------------------
# detect

def _detect_one(task):
    (image_id, src, enhance_cfg, det_cfg, nms_thresh, raw, out_dir) = task
    img = load_image(src)
    working = img if raw else enhance_pipeline(img, enhance_cfg)
    y_plane = rgb_to_yiq(working).y_plane if working.channels == 3 else working.plane(0)
    response = multiscale_ridge_map(y_plane, det_cfg.scales)
    proposals = propose_regions(response, det_cfg, image_id=image_id)
    kept = nms(proposals, nms_thresh)
    predictions = [
        annot_io.PredictionRecord(
            image_id=image_id, box=d.box, score=d.score, mask=d.mask, label=d.label
        )
        for d in kept
    ]
    overlay_path = Path(out_dir) / f"{image_id}_overlay.png"
    report.save_detection_overlay(
        working, kept, overlay_path, response=response, pre_nms=proposals
    )
    return predictions


def cmd_detect(args) -> int:
    out_dir = Path(args.out)
    _ensure_outdir(out_dir)
    enhance_cfg = _enhance_config(args)
    det_cfg = _detector_config(args)

    sources: list[tuple[str, str]] = []
    if args.manifest:
        manifest = annot_io.load_manifest(args.manifest)
        root = Path(args.manifest).parent
        for entry in manifest.images:
            path = Path(entry.path)
            sources.append((entry.image_id, str(path if path.is_absolute() else root / path)))
    for src in args.images:
        sources.append((Path(src).stem, src))

    tasks = [
        (image_id, src, enhance_cfg, det_cfg, args.nms_thresh, args.raw, str(out_dir))
        for image_id, src in sources
    ]
    predictions = []
    failures = 0
    for image_id, result in _run_tasks(_detect_one, tasks, args.jobs, key=lambda t: t[0]):
        if isinstance(result, Exception):
            failures += 1
            log_event(event="detect", id=image_id, status="error", error=str(result))
        else:
            predictions.extend(result)
            log_event(event="detect", id=image_id, status="ok", detections=len(result))
    annot_io.save_predictions(
        predictions, out_dir / "predictions.json", mode="raw" if args.raw else "enhanced"
    )
    return 2 if failures else 0


# ---------------------------------------------------------------------------
# score

def _prediction_pixel_mask(preds, width: int, height: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    for p in preds:
        if p.mask is not None:
            mask |= p.mask
        else:
            x0 = max(0, int(np.floor(p.box.x)))
            y0 = max(0, int(np.floor(p.box.y)))
            x1 = min(width, int(np.ceil(p.box.x + p.box.w)))
            y1 = min(height, int(np.ceil(p.box.y + p.box.h)))
            mask[y0:y1, x0:x1] = True
    return mask


def cmd_score(args) -> int:
    out_dir = Path(args.out)
    _ensure_outdir(out_dir)
    manifest = annot_io.load_manifest(args.manifest)
    predictions = annot_io.load_predictions(args.predictions, manifest=manifest)

    gts = [ann for entry in manifest.images for ann in entry.annotations]
    match = match_detections(predictions, gts, iou_thresh=args.match_iou)
    by_image = {m.image_id: m for m in match.images}

    flags = []
    per_pixel = []
    rows = []
    for entry in manifest.images:
        m = by_image.get(entry.image_id)
        top_tp = bool(m.top_pred_is_tp) if m is not None else False
        flags.append(top_tp)
        entry_preds = [p for p in predictions if p.image_id == entry.image_id]
        gt_mask = np.zeros((entry.height, entry.width), dtype=bool)
        for ann in entry.annotations:
            gt_mask |= ann.mask
        pm = pixel_metrics(
            _prediction_pixel_mask(entry_preds, entry.width, entry.height), gt_mask
        )
        per_pixel.append(pm)
        rows.append(
            {
                "image_id": entry.image_id,
                "tp": m.tp if m else 0,
                "fp": len(m.unmatched_preds) if m else 0,
                "fn": len(m.unmatched_gts) if m else len(entry.annotations),
                "top_is_tp": int(top_tp),
                "sensitivity": pm.sensitivity,
                "specificity": pm.specificity,
                "ppv": pm.ppv,
                "npv": pm.npv,
            }
        )

    obj = object_metrics(match, flags)
    pix = aggregate_pixel_metrics(per_pixel) if per_pixel else None
    doc = {
        "precision": obj.precision,
        "recall": obj.recall,
        "f1": obj.f1,
        "image_accuracy": obj.image_accuracy,
        "pixel": {
            "sensitivity": pix.sensitivity,
            "specificity": pix.specificity,
            "ppv": pix.ppv,
            "npv": pix.npv,
        }
        if pix
        else None,
        "counts": {
            "tp": match.tp,
            "fp": match.fp,
            "fn": match.fn,
            "images": len(manifest.images),
            "ground_truths": len(gts),
            "predictions": len(predictions),
        },
        "match_iou": args.match_iou,
    }
    (out_dir / "metrics.json").write_text(json.dumps(doc, indent=2) + "\n")
    with open(out_dir / "per_image.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()) if rows else ["image_id"])
        writer.writeheader()
        writer.writerows(rows)
    report.save_metrics_figure(doc, out_dir / "metrics.png")
    log_event(event="score", status="ok", precision=obj.precision, recall=obj.recall, f1=obj.f1)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ridgekit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_enh = sub.add_parser("enhance", help="preprocess fundus images")
    p_enh.add_argument("images", nargs="*")
    p_enh.add_argument("--out", required=True)
    p_enh.add_argument("--jobs", type=int, default=1)
    _add_enhance_flags(p_enh)
    p_enh.set_defaults(func=cmd_enhance)

    p_ph = sub.add_parser("phantom", help="generate synthetic ground-truth phantoms")
    p_ph.add_argument("--out", required=True)
    p_ph.add_argument("-n", "--count", type=int, default=1)
    p_ph.add_argument("--seed", type=int, default=None)
    p_ph.add_argument("--spec", help="phantom spec JSON file")
    p_ph.add_argument("--split", default="test")
    p_ph.add_argument("--width", type=int)
    p_ph.add_argument("--height", type=int)
    p_ph.add_argument("--vessel-count", type=int, dest="vessel_count")
    p_ph.add_argument("--ridge-radius", type=float)
    p_ph.add_argument("--ridge-span", type=float)
    p_ph.add_argument("--ridge-width", type=float)
    p_ph.add_argument("--ridge-contrast", type=float)
    p_ph.add_argument("--illum-gradient", type=float)
    p_ph.add_argument("--blur", type=float)
    p_ph.add_argument("--noise", type=float)
    p_ph.add_argument("--contrast-factor", type=float)
    p_ph.add_argument("--jobs", type=int, default=1)
    p_ph.set_defaults(func=cmd_phantom)

    p_det = sub.add_parser("detect", help="run the baseline ridge detector")
    p_det.add_argument("images", nargs="*")
    p_det.add_argument("--manifest", help="process all images from a dataset manifest")
    p_det.add_argument("--out", required=True)
    p_det.add_argument("--raw", action="store_true", help="skip enhancement")
    p_det.add_argument("--jobs", type=int, default=1)
    _add_enhance_flags(p_det)
    _add_detector_flags(p_det)
    p_det.set_defaults(func=cmd_detect)

    p_sc = sub.add_parser("score", help="score predictions against a manifest")
    p_sc.add_argument("--manifest", required=True)
    p_sc.add_argument("--predictions", required=True)
    p_sc.add_argument("--out", required=True)
    p_sc.add_argument("--match-iou", type=float, default=DEFAULT_MATCH_IOU)
    p_sc.set_defaults(func=cmd_score)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RidgekitError as exc:
        log_event(event=args.command, status="fatal", error=str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
