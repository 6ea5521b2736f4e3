"""CLI: convert a video or image into a descriptor stream file."""
from __future__ import annotations

import argparse
import sys

from .errors import DecodeError, ModelLoadError
from .extractor import ExtractorConfig, FrameExtractor, write_records


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topoextract",
        description="Extract descriptor streams from videos or images.",
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--video", help="input video path")
    source.add_argument("--image", help="single input image path")
    parser.add_argument("--out", required=True, help="output stream (JSONL)")
    parser.add_argument("--stride", type=int, default=30, help="sample every Nth video frame")
    parser.add_argument("--backbone", default="vit-rand/0",
                        help="'vit-rand/<seed>' or a path to trained weights")
    parser.add_argument("--layer", type=int, default=-1, help="encoder block to tap")
    parser.add_argument("--clusters", type=int, default=32, help="VLAD vocabulary size")
    parser.add_argument("--seed", type=int, default=0, help="vocabulary fitting seed")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ExtractorConfig(
            backbone=args.backbone,
            feature_layer=args.layer,
            vlad_clusters=args.clusters,
            frame_stride=args.stride,
            seed=args.seed,
        )
        extractor = FrameExtractor(config)
        if args.video:
            records = list(extractor.extract_video(args.video))
        else:
            records = [extractor.extract_image(args.image)]
        write_records(records, args.out)
    except (DecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ModelLoadError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"records={len(records)} dim={extractor.output_dim}")
    return 0


def main_entry() -> None:  # console-script shim
    raise SystemExit(main())
