"""Command-line entry point.

Subcommands: mask, eval-face, eval-video, pseudo-gt, eval-det, eval-pose,
eval-wild, plan, execute, report.  Primary data goes to --out files or
stdout; diagnostics go to stderr as one machine-parsable JSON line.  Exit
codes: 0 success, 1 usage error, 2 data/validation error, 3 backend failure.

Flag overrides take precedence over engine-config values (--config or the
ANONEVAL_CONFIG environment variable); the effective configuration is
embedded in every report's provenance block.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import face_metrics, geometry, orchestrator, pose_eval, report as report_mod
from . import streams, video_metrics
from .errors import BackendError, ValidationError

CONFIG_ENV_VAR = "ANONEVAL_CONFIG"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3

DEFAULTS = {
    "pair_iou_thr": 0.3,
    "conf_thr": 0.3,
    "pose_nms_thr": 0.9,
    "dilate": 0,
}


class _Parser(argparse.ArgumentParser):
    # Usage errors exit 1 (argparse default is 2, which we reserve for data).
    def error(self, message):
        self.print_usage(sys.stderr)
        print(
            json.dumps({"error": "UsageError", "message": message}),
            file=sys.stderr,
        )
        raise SystemExit(EXIT_USAGE)


def _load_engine_config(path: str | None) -> dict:
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return {}
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read engine config '{path}': {exc}") from exc
    if not isinstance(config, dict):
        raise ValidationError("engine config must be a JSON object")
    return config


def _effective(args, config: dict, key: str):
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return DEFAULTS[key]


def _openness_presets(config: dict) -> dict[str, geometry.OpennessSpec]:
    presets = dict(geometry.OPENNESS_PRESETS)
    for name, spec in config.get("openness_presets", {}).items():
        presets[name] = geometry.OpennessSpec(
            top_indices=tuple(spec["top"]),
            bottom_indices=tuple(spec["bottom"]),
            left_index=spec["left"],
            right_index=spec["right"],
        )
    return presets


def _protocol(config: dict, similarity: str) -> pose_eval.EvalProtocol:
    kwargs = {"similarity": similarity}
    if "oks_kappa" in config:
        kwargs["oks_kappa"] = tuple(float(k) for k in config["oks_kappa"])
    if "thresholds" in config:
        kwargs["thresholds"] = tuple(float(t) for t in config["thresholds"])
    return pose_eval.EvalProtocol(**kwargs)


def _write_output(data: bytes, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        path = Path(out)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)


_PATH_ARGS = (
    "landmarks",
    "original",
    "anonymized",
    "detections",
    "poses",
    "gt",
    "predictions",
    "pipeline",
    "stream",
    "inputs",
)


def _validate_input_paths(args):
    """All referenced input paths must exist before any work starts."""
    for name in _PATH_ARGS:
        value = getattr(args, name, None)
        if value is None:
            continue
        for path in value if isinstance(value, list) else [value]:
            if not Path(path).exists():
                raise ValidationError(f"input path does not exist: '{path}'")


def _read_stream_pairs(args):
    if len(args.original) != len(args.anonymized):
        raise ValidationError(
            f"{len(args.original)} original vs {len(args.anonymized)} anonymized "
            "stream files; counts must match"
        )
    return list(zip(args.original, args.anonymized))


def _collect_by_video(results):
    out = {}
    for video_id, payload in results:
        if video_id in out:
            raise ValidationError(f"duplicate video_id '{video_id}' across inputs")
        out[video_id] = payload
    return out


def _parse_pair(orig_path, anon_path, iou_thr):
    orig = streams.parse_face_stream(Path(orig_path).read_bytes(), "original")
    anon = streams.parse_face_stream(Path(anon_path).read_bytes(), "anonymized")
    paired = streams.pair_streams(orig, anon, iou_thr)
    return orig, anon, paired


def _map_videos(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Subcommand implementations.


def cmd_mask(args, config):
    data = Path(args.landmarks).read_bytes()
    stream = streams.parse_face_stream(data)
    faces = [f for f in stream.faces_at(args.frame) if f.landmarks is not None]
    if not faces:
        raise ValidationError(
            f"frame {args.frame} of '{stream.video_id}' has no face with landmarks"
        )
    face = max(faces, key=lambda f: f.bbox_area())
    width = args.width if args.width is not None else stream.width
    height = args.height if args.height is not None else stream.height
    dilate = int(_effective(args, config, "dilate"))
    mask = geometry.landmark_mask(face.landmarks, width, height, dilation=dilate)
    _write_output(geometry.write_mask_pgm(mask), args.out)
    return EXIT_OK


def _face_report(pairs_by_video, skipped_by_video, provenance) -> report_mod.MetricReport:
    rep = report_mod.MetricReport(provenance=provenance)
    keys = [key for key, _ in face_metrics.PAIR_METRIC_FIELDS]
    pooled = {key: [] for key in keys}
    pooled_groups = {key: [] for key in keys}
    pooled_skipped = {key: 0 for key in keys}
    for video_id, metrics in pairs_by_video.items():
        rep.per_video.setdefault(video_id, {})
        rep.per_video[video_id]["pairs_skipped"] = float(skipped_by_video[video_id])
        for key in keys:
            values, skipped = metrics[key]
            pooled[key].extend(values)
            pooled_groups[key].extend([video_id] * len(values))
            pooled_skipped[key] += skipped
            if values:
                mean, _, _ = report_mod.aggregate(values)
                rep.per_video[video_id][key] = mean
    for key in keys:
        if not pooled[key]:
            continue
        mean, std, n = report_mod.aggregate(pooled[key])
        rep.add(report_mod.MetricStat(key, "frame", mean, std, n, pooled_skipped[key]))
        mean_v, std_v, n_v = report_mod.aggregate(
            pooled[key], level="video", groups=pooled_groups[key]
        )
        rep.add(report_mod.MetricStat(key, "video", mean_v, std_v, n_v, 0))
    return rep


def cmd_eval_face(args, config):
    iou_thr = float(_effective(args, config, "pair_iou_thr"))
    presets = _openness_presets(config)

    def one(paths):
        orig_path, anon_path = paths
        _, _, paired = _parse_pair(orig_path, anon_path, iou_thr)
        metrics = face_metrics.evaluate_pairs(
            paired, signed_angles=args.signed_angles, presets=presets
        )
        return paired.video_id, metrics, len(paired.skipped_frames)

    results = _map_videos(one, _read_stream_pairs(args), args.jobs)
    pairs_by_video = _collect_by_video([(vid, m) for vid, m, _ in results])
    skipped_by_video = {vid: s for vid, _, s in results}
    provenance = {
        "pair_iou_thr": iou_thr,
        "pairing_rule": "greedy descending bbox IoU per frame",
        "euler_convention": face_metrics.EULER_CONVENTION,
        "angle_values": "signed" if args.signed_angles else "absolute",
        "std": "population (divide by n)",
        "scopes": "frame-global is the headline; video-mean aggregates per-video means",
        "config_hash": report_mod.config_hash(config),
    }
    rep = _face_report(pairs_by_video, skipped_by_video, provenance)
    _write_output(report_mod.emit_report(rep, args.format), args.out)
    return EXIT_OK


def cmd_eval_video(args, config):
    iou_thr = float(_effective(args, config, "pair_iou_thr"))

    def one(paths):
        orig_path, anon_path = paths
        orig, anon, _ = _parse_pair(orig_path, anon_path, iou_thr)
        values = video_metrics.evaluate_video_pair(
            orig, anon, center_per_frame=args.center_landmarks
        )
        return orig.video_id, values

    results = _map_videos(one, _read_stream_pairs(args), args.jobs)
    _collect_by_video(results)
    rep = report_mod.MetricReport(
        provenance={
            "identity_variance": "population variance of arccos(v_t . v_mu)",
            "descriptor_center": "L2-normalized element-wise median",
            "correlation": "zero-lag Pearson, mean over landmark channels",
            "landmark_centering": "per-frame centroid" if args.center_landmarks else "off",
            "config_hash": report_mod.config_hash(config),
        }
    )
    for key in (
        "identity_variance_original",
        "identity_variance_anonymized",
        "landmark_correlation",
    ):
        values = []
        skipped = 0
        for video_id, video_values in results:
            rep.per_video.setdefault(video_id, {})
            if video_values[key] is None:
                skipped += 1
            else:
                values.append(video_values[key])
                rep.per_video[video_id][key] = video_values[key]
        if values:
            mean, std, n = report_mod.aggregate(values)
            rep.add(report_mod.MetricStat(key, "video", mean, std, n, skipped))
    _write_output(report_mod.emit_report(rep, args.format), args.out)
    return EXIT_OK


def cmd_pseudo_gt(args, config):
    dets = pose_eval.parse_detections(Path(args.detections).read_bytes())
    poses = pose_eval.parse_poses(Path(args.poses).read_bytes())
    conf_thr = float(_effective(args, config, "conf_thr"))
    pose_nms_thr = float(_effective(args, config, "pose_nms_thr"))
    gt = pose_eval.build_pseudo_gt(
        dets,
        poses,
        conf_thr=conf_thr,
        pose_nms_thr=pose_nms_thr,
        protocol=_protocol(config, "oks"),
    )
    _write_output(pose_eval.serialize_pseudo_gt(gt), args.out)
    return EXIT_OK


def _ap_report(name, ap, breakdown, provenance, gt):
    rep = report_mod.MetricReport(provenance=provenance)
    rep.provenance["per_threshold_ap"] = {f"{t:.2f}": v for t, v in breakdown.items()}
    rep.add(
        report_mod.MetricStat(
            name, "frame", ap, 0.0, sample_count=gt.total_instances(), skipped_count=0
        )
    )
    return rep


def cmd_eval_det(args, config):
    gt = pose_eval.parse_pseudo_gt(Path(args.gt).read_bytes())
    preds = pose_eval.parse_detections(Path(args.predictions).read_bytes())
    protocol = _protocol(config, "iou")
    ap, breakdown = pose_eval.average_precision(gt, preds, protocol)
    provenance = {
        "similarity": "iou",
        "thresholds": list(protocol.thresholds),
        "recall_grid_points": len(protocol.recall_grid),
        "config_hash": report_mod.config_hash(config),
    }
    rep = _ap_report("detection_ap", ap, breakdown, provenance, gt)
    _write_output(report_mod.emit_report(rep, args.format), args.out)
    return EXIT_OK


def cmd_eval_pose(args, config):
    gt = pose_eval.parse_pseudo_gt(Path(args.gt).read_bytes())
    preds = pose_eval.parse_poses(Path(args.predictions).read_bytes())
    protocol = _protocol(config, "oks")
    ap, breakdown = pose_eval.evaluate_pose(
        gt, preds, exclude_face=args.exclude_face, protocol=protocol
    )
    provenance = {
        "similarity": "oks",
        "exclude_face": args.exclude_face,
        "thresholds": list(protocol.thresholds),
        "oks_kappa": list(protocol.oks_kappa),
        "config_hash": report_mod.config_hash(config),
    }
    name = "pose_ap_no_face" if args.exclude_face else "pose_ap"
    rep = _ap_report(name, ap, breakdown, provenance, gt)
    _write_output(report_mod.emit_report(rep, args.format), args.out)
    return EXIT_OK


def cmd_eval_wild(args, config):
    gt = pose_eval.parse_pseudo_gt(Path(args.gt).read_bytes())
    dets = pose_eval.parse_detections(Path(args.detections).read_bytes())
    poses = pose_eval.parse_poses(Path(args.poses).read_bytes())
    conf_thr = float(_effective(args, config, "conf_thr"))
    protocol = _protocol(config, "oks")
    ap, breakdown = pose_eval.evaluate_in_the_wild(
        gt, dets, poses, conf_thr=conf_thr, protocol=protocol
    )
    provenance = {
        "similarity": "oks",
        "conf_thr": conf_thr,
        "conf_rule": "detection score strictly greater than conf_thr",
        "prediction_side_nms": "none",
        "config_hash": report_mod.config_hash(config),
    }
    rep = _ap_report("in_the_wild_ap", ap, breakdown, provenance, gt)
    _write_output(report_mod.emit_report(rep, args.format), args.out)
    return EXIT_OK


def _load_plan_inputs(args):
    config = orchestrator.PipelineConfig.from_json(Path(args.pipeline).read_bytes())
    stream = streams.parse_face_stream(Path(args.stream).read_bytes())
    return config, stream


def cmd_plan(args, config):
    pipeline_config, stream = _load_plan_inputs(args)
    plan = orchestrator.plan_pipeline(pipeline_config, stream)
    _write_output(plan.to_json(), args.out)
    return EXIT_OK


def cmd_execute(args, config):
    pipeline_config, stream = _load_plan_inputs(args)
    plan = orchestrator.plan_pipeline(pipeline_config, stream)
    try:
        record = orchestrator.execute_plan(plan)
    except BackendError as exc:
        if exc.record is not None:
            data = (json.dumps(exc.record, sort_keys=True, indent=1) + "\n").encode()
            _write_output(data, args.out)
        raise
    data = (json.dumps(record, sort_keys=True, indent=1) + "\n").encode("utf-8")
    _write_output(data, args.out)
    return EXIT_OK


def cmd_report(args, config):
    parts = [
        report_mod.parse_report_json(Path(path).read_bytes()) for path in args.inputs
    ]
    merged = report_mod.merge_reports(parts)
    _write_output(report_mod.emit_report(merged, args.format), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument grammar.


def _add_common_output(p, default_format="json"):
    p.add_argument("--out", help="output file path (default: stdout)")
    p.add_argument(
        "--format",
        choices=report_mod.FORMATS,
        default=default_format,
        help=f"report format (default: {default_format})",
    )


def _add_jobs(p):
    p.add_argument(
        "--jobs",
        type=int,
        default=1,
        help="parallel workers across videos (default: 1)",
    )


def build_parser() -> _Parser:
    parser = _Parser(
        prog="anoneval",
        description="Evaluation engine and pipeline toolkit for face anonymization.",
    )
    parser.add_argument(
        "--config",
        help="engine config JSON path (default: $ANONEVAL_CONFIG if set); "
        "flags override config values",
    )
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")

    p = sub.add_parser(
        "mask",
        help="convex-hull face mask from landmarks, written as binary PGM",
        description="Generate the convex-hull face mask of one frame as a "
        "binary PGM (P5) file.",
    )
    p.add_argument("--landmarks", required=True, help="face-stream file with landmarks")
    p.add_argument("--frame", type=int, required=True, help="frame index to use")
    p.add_argument("--width", type=int, help="mask width (default: stream header)")
    p.add_argument("--height", type=int, help="mask height (default: stream header)")
    p.add_argument("--out", help="output PGM path (default: stdout)")
    p.add_argument(
        "--dilate",
        type=int,
        help="mask dilation radius in pixels (default: 0, no dilation)",
    )
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser(
        "eval-face",
        help="per-frame face metrics over paired original/anonymized streams",
        description="Identity cosine distance, attribute match ratios, gaze, "
        "eye/mouth openness and head-orientation differences. Head rotation "
        "differences use the intrinsic Z-Y-X (yaw-pitch-roll) Euler convention.",
    )
    p.add_argument("--original", nargs="+", required=True, help="original stream files")
    p.add_argument(
        "--anonymized", nargs="+", required=True, help="anonymized stream files"
    )
    p.add_argument(
        "--pair-iou-thr",
        type=float,
        help="min bbox IoU to pair faces within a frame (default: 0.3)",
    )
    p.add_argument(
        "--signed-angles",
        action="store_true",
        help="report signed Euler angles instead of absolute values "
        "(default: absolute; convention: intrinsic Z-Y-X)",
    )
    _add_common_output(p)
    _add_jobs(p)
    p.set_defaults(func=cmd_eval_face)

    p = sub.add_parser(
        "eval-video",
        help="per-video temporal metrics (identity variance, landmark correlation)",
        description="Identity-fluctuation variance and landmark-trajectory "
        "cross-correlation per video, aggregated across videos.",
    )
    p.add_argument("--original", nargs="+", required=True, help="original stream files")
    p.add_argument(
        "--anonymized", nargs="+", required=True, help="anonymized stream files"
    )
    p.add_argument(
        "--pair-iou-thr",
        type=float,
        help="min bbox IoU to pair faces within a frame (default: 0.3)",
    )
    p.add_argument(
        "--center-landmarks",
        action="store_true",
        help="center each frame's landmarks on their centroid before "
        "correlating (default: off, raw pixel trajectories)",
    )
    _add_common_output(p)
    _add_jobs(p)
    p.set_defaults(func=cmd_eval_video)

    p = sub.add_parser(
        "pseudo-gt",
        help="build the pseudo ground truth from detections and poses",
        description="Keep poses whose detection confidence is strictly above "
        "the threshold, then remove duplicates with pose-based NMS.",
    )
    p.add_argument("--detections", required=True, help="detection records file")
    p.add_argument("--poses", required=True, help="pose records file")
    p.add_argument(
        "--conf-thr",
        type=float,
        help="detection confidence threshold, strict > (default: 0.3)",
    )
    p.add_argument(
        "--pose-nms-thr",
        type=float,
        help="pose NMS OKS threshold (default: 0.9)",
    )
    p.add_argument("--out", help="output pseudo-GT JSON path (default: stdout)")
    p.set_defaults(func=cmd_pseudo_gt)

    p = sub.add_parser(
        "eval-det",
        help="detection AP (IoU) against the pseudo GT",
        description="COCO-protocol average precision with box IoU similarity "
        "over the 0.50:0.05:0.95 threshold sweep, reported x100.",
    )
    p.add_argument("--gt", required=True, help="pseudo-GT JSON file")
    p.add_argument("--predictions", required=True, help="detection records file")
    _add_common_output(p)
    p.set_defaults(func=cmd_eval_det)

    p = sub.add_parser(
        "eval-pose",
        help="pose AP (OKS) against the pseudo GT",
        description="COCO-protocol average precision with OKS similarity, "
        "optionally excluding the five facial keypoints.",
    )
    p.add_argument("--gt", required=True, help="pseudo-GT JSON file")
    p.add_argument("--predictions", required=True, help="pose records file")
    p.add_argument(
        "--exclude-face",
        action="store_true",
        help="exclude the five facial keypoints (nose, eyes, ears) "
        "(default: all 17 keypoints)",
    )
    _add_common_output(p)
    p.set_defaults(func=cmd_eval_pose)

    p = sub.add_parser(
        "eval-wild",
        help="in-the-wild AP: detect+pose pipeline outputs vs pseudo GT",
        description="Filter anonymized-side poses by detection confidence "
        "(strict >, default 0.3), then score with OKS AP; no NMS on the "
        "prediction side.",
    )
    p.add_argument("--gt", required=True, help="pseudo-GT JSON file")
    p.add_argument("--detections", required=True, help="anonymized detections file")
    p.add_argument("--poses", required=True, help="anonymized poses file")
    p.add_argument(
        "--conf-thr",
        type=float,
        help="detection confidence threshold, strict > (default: 0.3)",
    )
    _add_common_output(p)
    p.set_defaults(func=cmd_eval_wild)

    p = sub.add_parser(
        "plan",
        help="plan the mask/inpaint/faceswap pipeline for one video",
        description="Select the reference frame, resolve backend command "
        "templates and list frames to obscure; writes the plan as JSON.",
    )
    p.add_argument("--pipeline", required=True, help="pipeline config JSON file")
    p.add_argument("--stream", required=True, help="face-stream file of the video")
    p.add_argument("--out", help="output plan path (default: stdout)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser(
        "execute",
        help="plan and run the pipeline stages, capturing an execution record",
        description="Runs the mask stage in-process and the inpaint/faceswap "
        "backends as external processes; aborts on the first failure.",
    )
    p.add_argument("--pipeline", required=True, help="pipeline config JSON file")
    p.add_argument("--stream", required=True, help="face-stream file of the video")
    p.add_argument("--out", help="output execution record path (default: stdout)")
    p.set_defaults(func=cmd_execute)

    p = sub.add_parser(
        "report",
        help="merge partial JSON reports and emit in any format",
        description="Merge JSON reports produced by the eval-* subcommands.",
    )
    p.add_argument("--inputs", nargs="+", required=True, help="JSON report files")
    _add_common_output(p)
    p.set_defaults(func=cmd_report)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        config = _load_engine_config(args.config)
        _validate_input_paths(args)
        return args.func(args, config)
    except ValidationError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return EXIT_DATA
    except BackendError as exc:
        print(
            json.dumps(
                {"error": "BackendError", "message": str(exc), "stage": exc.stage}
            ),
            file=sys.stderr,
        )
        return EXIT_BACKEND
    except OSError as exc:
        print(
            json.dumps({"error": "OSError", "message": str(exc)}),
            file=sys.stderr,
        )
        return EXIT_DATA


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
