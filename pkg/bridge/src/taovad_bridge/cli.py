from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from .config import BridgeConfig
from .convert import convert_annotations
from .detect import export_detections
from .errors import ConfigError, ConversionError
from .serve import serve


def _cmd_export(args) -> int:
    cfg = BridgeConfig(
        detector=args.detector,
        dataset=Path(args.dataset),
        out=Path(args.out),
        options={"threshold": args.threshold, "score_scale": args.score_scale},
    )
    count = export_detections(cfg.dataset, cfg.out, detector=cfg.detector, **cfg.options)
    print(f"wrote {count} detections to {cfg.out}", file=sys.stderr)
    return 0


def _cmd_serve(args) -> int:
    cfg = BridgeConfig(segmenter=args.segmenter, device=args.device)
    return serve(cfg.segmenter, device=cfg.device)


def _cmd_convert(args) -> int:
    cfg = BridgeConfig(source=Path(args.source), out=Path(args.out_dir))
    count = convert_annotations(cfg.source, cfg.out)
    print(f"wrote {count} mask frames to {cfg.out}", file=sys.stderr)
    return 0


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taovad-bridge",
        description="Model-side adapter speaking the taovad wire formats.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-detections", help="run a detector over a clip, write tao-det/1")
    p.add_argument("--dataset", required=True, help="directory of per-frame .pgm images")
    p.add_argument("--out", required=True)
    p.add_argument("--detector", default="stub")
    p.add_argument("--threshold", type=int, default=128)
    p.add_argument("--score-scale", type=float, default=3.0)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("serve-segmenter", help="speak tao-seg/1 on stdin/stdout, one session")
    p.add_argument("--segmenter", default="stub")
    p.add_argument("--device", default="cpu")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("convert-annotations", help="normalize raw masks to a graymap directory")
    p.add_argument("--source", required=True, help=".npy volume or directory of 2-D .npy frames")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_convert)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConversionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
