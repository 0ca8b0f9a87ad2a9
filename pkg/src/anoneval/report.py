"""Aggregation of per-frame and per-video metric values into report tables.

Reports carry mean, population standard deviation, sample and skipped counts
per metric, at two scopes: frame-global (headline, pooled over all frames of
all videos) and video-mean (per-video means aggregated across videos).  Every
configurable decision is recorded in the provenance block, and emission is
byte-deterministic for a given report.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

from .errors import ValidationError

SCOPE_FRAME = "frame"
SCOPE_VIDEO = "video"

FORMATS = ("json", "csv", "markdown")

# Display metadata per metric key: table row label, higher-is-better arrow,
# and the display style used by the markdown emitter.
METRIC_LABELS = {
    "identity_cos_dist": ("Identity Cosine Distance", "up", "sig2"),
    "gender_match": ("Same Gender Ratio", "up", "sig2"),
    "race_match": ("Same Race Ratio", "up", "sig2"),
    "emotion_match": ("Same Emotion Ratio", "up", "sig2"),
    "gaze_diff": ("Gaze Difference", "down", "sig2"),
    "eye_openness_diff": ("Eye Openness Difference", "down", "sig2"),
    "mouth_openness_diff": ("Mouth Openness Difference", "down", "sig2"),
    "angle_diff_x": ("X-axis Angle difference [rad]", "down", "sig2"),
    "angle_diff_y": ("Y-axis Angle difference [rad]", "down", "sig2"),
    "angle_diff_z": ("Z-axis Angle difference [rad]", "down", "sig2"),
    "identity_variance_original": ("Original Identity Variance", None, "sig2"),
    "identity_variance_anonymized": ("Anonymized Identity Variance", "down", "sig2"),
    "landmark_correlation": ("Correlation of landmarks", "up", "sig2"),
    "detection_ap": ("detection AP", "up", "ap1"),
    "pose_ap": ("pose AP", "up", "ap1"),
    "pose_ap_no_face": ("AP w/o face", "up", "ap1"),
    "in_the_wild_ap": ("in-the-wild AP", "up", "ap1"),
    "relative_ap": ("relative AP", "up", "ap1"),
}


@dataclass
class MetricStat:
    name: str
    scope: str
    mean: float
    std: float
    sample_count: int
    skipped_count: int = 0


@dataclass
class MetricReport:
    metrics: list[MetricStat] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    per_video: dict[str, dict[str, float]] = field(default_factory=dict)

    def add(self, stat: MetricStat) -> None:
        if any(m.name == stat.name and m.scope == stat.scope for m in self.metrics):
            raise ValidationError(
                f"duplicate metric '{stat.name}' at scope '{stat.scope}'"
            )
        self.metrics.append(stat)


def aggregate(values, level: str = SCOPE_FRAME, groups=None) -> tuple[float, float, int]:
    """Mean, population standard deviation and count of a value list.

    At video level, ``groups`` gives each value's video id; per-video means
    are computed first and then aggregated across videos.
    """
    values = [float(v) for v in values]
    if not values:
        raise ValidationError("cannot aggregate an empty value list")
    if level == SCOPE_VIDEO:
        if groups is None or len(groups) != len(values):
            raise ValidationError("video-level aggregation needs one group per value")
        by_group: dict = {}
        for g, v in zip(groups, values):
            by_group.setdefault(g, []).append(v)
        values = [math.fsum(vs) / len(vs) for vs in by_group.values()]
    elif level != SCOPE_FRAME:
        raise ValidationError(f"unknown aggregation level '{level}'")
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var), n


def relative_ap(method_ap: float, baseline_ap: float) -> float:
    """Percentage of the baseline AP retained by a method."""
    if baseline_ap <= 0:
        raise ValidationError("baseline AP must be positive")
    return 100.0 * method_ap / baseline_ap


def config_hash(config: dict) -> str:
    """Stable short hash of an effective configuration, for provenance."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _round_sig(x: float, digits: int = 2) -> float:
    if x == 0 or not math.isfinite(x):
        return x
    return round(x, -int(math.floor(math.log10(abs(x)))) + digits - 1)


def _fmt(x: float, style: str) -> str:
    if style == "ap1":
        return f"{x:.1f}"
    r = _round_sig(x, 2)
    if r == int(r) and abs(r) >= 1:
        return str(int(r))
    return f"{r:g}"


def _label(name: str):
    return METRIC_LABELS.get(name, (name, None, "sig2"))


def _emit_json(report: MetricReport) -> bytes:
    doc = {
        "metrics": [
            {
                "name": m.name,
                "label": _label(m.name)[0],
                "scope": m.scope,
                "mean": m.mean,
                "std": m.std,
                "sample_count": m.sample_count,
                "skipped_count": m.skipped_count,
            }
            for m in report.metrics
        ],
        "per_video": report.per_video,
        "provenance": report.provenance,
    }
    return (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode("utf-8")


def _emit_csv(report: MetricReport) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "scope", "mean", "std", "n", "skipped"])
    for m in report.metrics:
        writer.writerow(
            [m.name, m.scope, repr(m.mean), repr(m.std), m.sample_count, m.skipped_count]
        )
    return buf.getvalue().encode("utf-8")


_ARROWS = {"up": " ↑", "down": " ↓", None: ""}


def _emit_markdown(report: MetricReport) -> bytes:
    lines = ["| Metric | Scope | Value | n | skipped |", "| --- | --- | --- | --- | --- |"]
    for m in report.metrics:
        label, direction, style = _label(m.name)
        value = f"{_fmt(m.mean, style)} ± {_fmt(m.std, style)}"
        lines.append(
            f"| {label}{_ARROWS[direction]} | {m.scope} | {value} "
            f"| {m.sample_count} | {m.skipped_count} |"
        )
    if report.provenance:
        lines.append("")
        lines.append(
            "Provenance: "
            + json.dumps(report.provenance, sort_keys=True, separators=(", ", ": "))
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def emit_report(report: MetricReport, fmt: str = "json") -> bytes:
    """Deterministic, byte-stable report emission in one of three formats."""
    if fmt == "json":
        return _emit_json(report)
    if fmt == "csv":
        return _emit_csv(report)
    if fmt == "markdown":
        return _emit_markdown(report)
    raise ValidationError(f"unknown report format '{fmt}' (expected one of {FORMATS})")


def parse_report_json(data) -> MetricReport:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    doc = json.loads(text)
    report = MetricReport(
        provenance=doc.get("provenance", {}), per_video=doc.get("per_video", {})
    )
    for m in doc.get("metrics", []):
        report.add(
            MetricStat(
                name=m["name"],
                scope=m["scope"],
                mean=float(m["mean"]),
                std=float(m["std"]),
                sample_count=int(m["sample_count"]),
                skipped_count=int(m["skipped_count"]),
            )
        )
    return report


def parse_report_csv(data) -> MetricReport:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != ["metric", "scope", "mean", "std", "n", "skipped"]:
        raise ValidationError(f"unexpected CSV header {header}")
    report = MetricReport()
    for row in reader:
        if not row:
            continue
        report.add(
            MetricStat(
                name=row[0],
                scope=row[1],
                mean=float(row[2]),
                std=float(row[3]),
                sample_count=int(row[4]),
                skipped_count=int(row[5]),
            )
        )
    return report


def merge_reports(reports: list[MetricReport]) -> MetricReport:
    """Concatenate partial reports; duplicate (name, scope) rows are an error."""
    merged = MetricReport()
    for rep in reports:
        for m in rep.metrics:
            merged.add(m)
        for video_id, values in rep.per_video.items():
            merged.per_video.setdefault(video_id, {}).update(values)
        for key, value in rep.provenance.items():
            if key in merged.provenance and merged.provenance[key] != value:
                raise ValidationError(
                    f"conflicting provenance for '{key}' while merging reports"
                )
            merged.provenance[key] = value
    return merged
