"""Per-frame-pair metrics: identity, attributes, gaze, openness, orientation.

All functions are pure and deterministic.  Aggregation over frames and videos
lives in :mod:`anoneval.report`; this module computes one value per pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import ValidationError
from .streams import FaceRecord, PairedFrameStream

EULER_CONVENTION = "intrinsic Z-Y-X (yaw-pitch-roll)"

GIMBAL_EPS = 1e-7

ATTRIBUTES = ("gender", "race", "emotion")


@dataclass(frozen=True)
class FramePairMetrics:
    """Metric values for one (original, anonymized) pair; None when an input
    field is absent on either side."""

    frame_idx: int
    identity_cos_dist: float | None = None
    gender_match: bool | None = None
    race_match: bool | None = None
    emotion_match: bool | None = None
    gaze_diff: float | None = None
    eye_openness_diff: float | None = None
    mouth_openness_diff: float | None = None
    angle_diff: tuple[float, float, float] | None = None  # |a_x|, |a_y|, |a_z| rad


def identity_cosine_distance(v_o: np.ndarray, v_a: np.ndarray) -> float:
    """Cosine distance 1 - v_o . v_a between unit descriptors, in [0, 2]."""
    v_o = np.asarray(v_o, dtype=np.float64)
    v_a = np.asarray(v_a, dtype=np.float64)
    if v_o.shape != v_a.shape:
        raise ValidationError(
            f"descriptor dimension mismatch: {v_o.shape} vs {v_a.shape}"
        )
    return float(min(2.0, max(0.0, 1.0 - float(np.dot(v_o, v_a)))))


def attribute_match(orig: FaceRecord, anon: FaceRecord, attribute: str) -> bool:
    """Exact label equality for one of gender/race/emotion."""
    if attribute not in ATTRIBUTES:
        raise ValidationError(f"unknown attribute '{attribute}'")
    if (
        orig.attributes is None
        or anon.attributes is None
        or attribute not in orig.attributes
        or attribute not in anon.attributes
    ):
        raise ValidationError(f"both records must carry attribute '{attribute}'")
    return orig.attributes[attribute] == anon.attributes[attribute]


def gaze_difference(g_o, g_a) -> float:
    """Euclidean difference of two gaze vectors in [-1, 1]^2."""
    go = np.asarray(g_o, dtype=np.float64)
    ga = np.asarray(g_a, dtype=np.float64)
    return float(np.linalg.norm(go - ga))


def euler_zyx(R: np.ndarray) -> tuple[float, float, float]:
    """Signed Euler angles (a_x, a_y, a_z) of R = Rz(a_z) Ry(a_y) Rx(a_x).

    Near gimbal lock (|R31| > 1 - 1e-7) a_z is fixed to 0 and a_x absorbs the
    remaining in-plane rotation, which reconstructs R exactly at the poles.
    """
    R = np.asarray(R, dtype=np.float64)
    r31 = float(np.clip(R[2, 0], -1.0, 1.0))
    a_y = -math.asin(r31)
    if abs(R[2, 0]) > 1.0 - GIMBAL_EPS:
        a_z = 0.0
        a_x = math.atan2(-R[1, 2], R[1, 1])
    else:
        a_x = math.atan2(R[2, 1], R[2, 2])
        a_z = math.atan2(R[1, 0], R[0, 0])
    return (a_x, a_y, a_z)


def rotation_difference(
    R_o: np.ndarray, R_a: np.ndarray, signed: bool = False
) -> tuple[float, float, float]:
    """Euler angles of the head-orientation difference dR = R_o R_a^T.

    Returns (|a_x|, |a_y|, |a_z|) by default; signed angles with signed=True.
    """
    delta = np.asarray(R_o, dtype=np.float64) @ np.asarray(R_a, dtype=np.float64).T
    a_x, a_y, a_z = euler_zyx(delta)
    if signed:
        return (a_x, a_y, a_z)
    return (abs(a_x), abs(a_y), abs(a_z))


def openness_difference(orig: FaceRecord, anon: FaceRecord, spec) -> float:
    """|openness(original) - openness(anonymized)| for one landmark group."""
    if orig.landmarks is None or anon.landmarks is None:
        raise ValidationError("both records must carry landmarks")
    return abs(
        geometry.openness_ratio(orig.landmarks, spec)
        - geometry.openness_ratio(anon.landmarks, spec)
    )


def _mean_eye_openness(landmarks, presets) -> float:
    return 0.5 * (
        geometry.openness_ratio(landmarks, presets["left_eye"])
        + geometry.openness_ratio(landmarks, presets["right_eye"])
    )


def compute_pair_metrics(
    orig: FaceRecord,
    anon: FaceRecord,
    frame_idx: int | None = None,
    signed_angles: bool = False,
    presets=None,
) -> FramePairMetrics:
    """All per-pair metrics for which both records carry the inputs.

    Degenerate landmark geometry (zero eye/mouth baseline) leaves the
    corresponding openness difference unset, mirroring a missing field.
    ``presets`` overrides the default openness landmark groups.
    """
    idx = orig.frame_idx if frame_idx is None else frame_idx
    presets = presets or geometry.OPENNESS_PRESETS
    values: dict = {}

    if orig.descriptor is not None and anon.descriptor is not None:
        values["identity_cos_dist"] = identity_cosine_distance(
            orig.descriptor, anon.descriptor
        )
    if orig.attributes is not None and anon.attributes is not None:
        for attr in ATTRIBUTES:
            if attr in orig.attributes and attr in anon.attributes:
                values[f"{attr}_match"] = attribute_match(orig, anon, attr)
    if orig.gaze is not None and anon.gaze is not None:
        values["gaze_diff"] = gaze_difference(orig.gaze, anon.gaze)
    if orig.landmarks is not None and anon.landmarks is not None:
        try:
            values["eye_openness_diff"] = abs(
                _mean_eye_openness(orig.landmarks, presets)
                - _mean_eye_openness(anon.landmarks, presets)
            )
        except ValidationError:
            pass
        try:
            values["mouth_openness_diff"] = abs(
                geometry.openness_ratio(orig.landmarks, presets["mouth"])
                - geometry.openness_ratio(anon.landmarks, presets["mouth"])
            )
        except ValidationError:
            pass
    if orig.head_rot is not None and anon.head_rot is not None:
        values["angle_diff"] = rotation_difference(
            orig.head_rot, anon.head_rot, signed=signed_angles
        )

    return FramePairMetrics(frame_idx=idx, **values)


# Metric keys in report order, with extractors over FramePairMetrics.
PAIR_METRIC_FIELDS = (
    ("identity_cos_dist", lambda m: m.identity_cos_dist),
    ("gender_match", lambda m: None if m.gender_match is None else float(m.gender_match)),
    ("race_match", lambda m: None if m.race_match is None else float(m.race_match)),
    ("emotion_match", lambda m: None if m.emotion_match is None else float(m.emotion_match)),
    ("gaze_diff", lambda m: m.gaze_diff),
    ("eye_openness_diff", lambda m: m.eye_openness_diff),
    ("mouth_openness_diff", lambda m: m.mouth_openness_diff),
    ("angle_diff_x", lambda m: None if m.angle_diff is None else m.angle_diff[0]),
    ("angle_diff_y", lambda m: None if m.angle_diff is None else m.angle_diff[1]),
    ("angle_diff_z", lambda m: None if m.angle_diff is None else m.angle_diff[2]),
)


def evaluate_pairs(
    paired: PairedFrameStream, signed_angles: bool = False, presets=None
) -> dict[str, tuple[list[float], int]]:
    """Per-metric value list plus skipped-pair count over a paired stream."""
    all_metrics = [
        compute_pair_metrics(o, a, idx, signed_angles=signed_angles, presets=presets)
        for idx, o, a in paired.pairs
    ]
    out: dict[str, tuple[list[float], int]] = {}
    for key, extract in PAIR_METRIC_FIELDS:
        values = []
        skipped = 0
        for m in all_metrics:
            v = extract(m)
            if v is None:
                skipped += 1
            else:
                values.append(float(v))
        out[key] = (values, skipped)
    return out
