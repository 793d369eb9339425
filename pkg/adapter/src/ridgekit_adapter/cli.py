"""Command line for batch inference: images in, predictions JSON out."""

from __future__ import annotations

import argparse
import json
import sys

from .adapter import ARCHITECTURES, AdapterConfig, AdapterError, infer_and_export


def log_event(**fields) -> None:
    print(json.dumps(fields, sort_keys=True), file=sys.stderr, flush=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ridgekit-adapter")
    parser.add_argument("--weights", required=True, help="model state-dict path")
    parser.add_argument("--images", nargs="+", required=True)
    parser.add_argument("--out", required=True, help="predictions JSON path")
    parser.add_argument("--arch", default="maskrcnn_resnet101_fpn", choices=sorted(ARCHITECTURES))
    parser.add_argument("--score-thresh", type=float, default=0.5)
    parser.add_argument("--resize", metavar="WxH", default="1024x800")
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        w, _, h = args.resize.partition("x")
        cfg = AdapterConfig(
            weights=args.weights,
            arch=args.arch,
            score_thresh=args.score_thresh,
            resize=(int(w), int(h)),
            device=args.device,
        )
        written, failed = infer_and_export(args.images, cfg, args.out, log=log_event)
    except (AdapterError, ValueError) as exc:
        log_event(event="adapter", status="fatal", error=str(exc))
        return 1
    log_event(event="adapter", status="done", predictions=written, failures=len(failed))
    return 2 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
