"""Command line for the extraction and baseline-anonymizer harness.

Subcommands: synth-clip, extract, black-rect, inpaint-backend,
faceswap-backend.  The two backend subcommands match the evaluation engine's
pipeline command-template contract ({input}/{mask}/{identity}/{output}).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import anonymize, clip, features


def cmd_synth_clip(args):
    paths = clip.render_clip(args.out, frames=args.frames, size=args.size,
                             empty=args.empty)
    print(f"wrote {len(paths)} frames to {args.out}")
    return 0


def cmd_extract(args):
    config = features.ExtractorConfig(
        video_id=args.video_id or Path(args.video).stem,
        role=args.role,
        frame_stride=args.stride,
    )
    summary = features.extract(args.video, config, args.out_prefix)
    print(json.dumps(summary, indent=1, sort_keys=True))
    return 0


def cmd_black_rect(args):
    frames = clip.read_video(args.video)
    boxes = anonymize.face_boxes_from_stream(args.stream)
    anonymized, skipped = anonymize.black_rectangle(frames, boxes)
    clip.write_frames(args.out, anonymized)
    for idx in skipped:
        print(f"frame {idx}: no face boxes, left unchanged", file=sys.stderr)
    print(f"wrote {len(anonymized)} frames to {args.out} "
          f"({len(skipped)} unchanged)")
    return 0


def cmd_inpaint_backend(args):
    out = anonymize.inpaint_identity(args.input, args.mask, args.output,
                                     frame_idx=args.frame)
    print(f"identity image written to {out}")
    return 0


def cmd_faceswap_backend(args):
    paths = anonymize.faceswap_video(args.input, args.identity, args.output)
    print(f"wrote {len(paths)} swapped frames to {args.output}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="anoneval-extract",
        description="Feature extraction and baseline anonymizers emitting "
        "the evaluation engine's file formats.",
    )
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")

    p = sub.add_parser("synth-clip", help="render the bundled synthetic test clip")
    p.add_argument("--out", required=True, help="output frame directory")
    p.add_argument("--frames", type=int, default=10, help="frame count (default: 10)")
    p.add_argument("--size", type=int, default=128, help="square frame size (default: 128)")
    p.add_argument("--empty", action="store_true", help="render background only")
    p.set_defaults(func=cmd_synth_clip)

    p = sub.add_parser("extract", help="extract face/detection/pose records")
    p.add_argument("--video", required=True, help="video file or frame directory")
    p.add_argument("--out-prefix", required=True,
                   help="writes <prefix>_faces.jsonl, _detections.jsonl, _poses.jsonl")
    p.add_argument("--role", default="original", choices=("original", "anonymized"),
                   help="stream role written to the header (default: original)")
    p.add_argument("--video-id", help="video id (default: video file stem)")
    p.add_argument("--stride", type=int, default=1, help="frame stride (default: 1)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("black-rect", help="black-rectangle baseline anonymizer")
    p.add_argument("--video", required=True, help="video file or frame directory")
    p.add_argument("--stream", required=True,
                   help="face-stream file supplying per-frame face boxes")
    p.add_argument("--out", required=True, help="output frame directory")
    p.set_defaults(func=cmd_black_rect)

    p = sub.add_parser(
        "inpaint-backend",
        help="identity-image backend: fills the masked face from its surroundings",
    )
    p.add_argument("--input", required=True, help="source video or frame directory")
    p.add_argument("--mask", required=True, help="binary PGM face mask")
    p.add_argument("--output", required=True, help="identity image path")
    p.add_argument("--frame", type=int, default=0,
                   help="reference frame index (default: 0)")
    p.set_defaults(func=cmd_inpaint_backend)

    p = sub.add_parser(
        "faceswap-backend",
        help="face-swap backend: pastes the identity face into every frame",
    )
    p.add_argument("--input", required=True, help="source video or frame directory")
    p.add_argument("--identity", required=True, help="identity image path")
    p.add_argument("--output", required=True, help="output frame directory")
    p.set_defaults(func=cmd_faceswap_backend)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (IOError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
