"""Classical per-frame feature extraction emitting the engine's file formats.

The extractor is deliberately thin and model-free: faces and bodies are
located by color segmentation, landmarks are placed from measured face
geometry, descriptors are normalized multi-channel thumbnails, head rotation
and gaze come from eye/mouth geometry, and the attribute labels are toy
heuristic classifiers.  Each feature family sits behind a registry name so a
pretrained model (face detector, landmarker, embedder, attribute or pose
network) can be slotted in without touching the record-writing code; the
chosen backend per family is recorded in the output provenance.

All output files use the evaluation engine's formats: a face stream with a
header line and one frame-face observation per line (``"faces": []`` marks a
processed frame with no detection), plus newline-delimited detection and
pose records sharing ``instance_id``.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .clip import BODY_MARKER_BGR, MARKER_RADIUS, MOUTH_BGR, SKIN_BGR, read_video

SCHEMA_VERSION = 1

CLASSICAL = "classical"

FEATURE_FAMILIES = (
    "detector",
    "landmarks",
    "descriptor",
    "head_pose",
    "gaze",
    "attributes",
    "person_detector",
    "pose",
)


@dataclass
class ExtractorConfig:
    video_id: str
    role: str = "original"
    frame_stride: int = 1
    device: str = "cpu"
    backends: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.frame_stride < 1:
            raise ValueError("frame_stride must be >= 1")
        for family in FEATURE_FAMILIES:
            impl = self.backends.setdefault(family, CLASSICAL)
            if impl != CLASSICAL:
                raise ValueError(
                    f"backend '{impl}' for feature family '{family}' is not "
                    "available; register a model adapter or use 'classical'"
                )


def _mask_bbox(mask):
    ys, xs = np.where(mask)
    if xs.size == 0:
        return None
    return (
        float(xs.min()),
        float(ys.min()),
        float(xs.max() - xs.min() + 1),
        float(ys.max() - ys.min() + 1),
    )


def _color_mask(frame, bgr, tol):
    lo = np.array([max(0, c - tol) for c in bgr], dtype=np.uint8)
    hi = np.array([min(255, c + tol) for c in bgr], dtype=np.uint8)
    return cv2.inRange(frame, lo, hi) > 0


def detect_person(frame):
    """Saturated (non-gray) pixels form the figure; returns (bbox, score)."""
    spread = frame.max(axis=2).astype(np.int16) - frame.min(axis=2).astype(np.int16)
    mask = spread > 25
    bbox = _mask_bbox(mask)
    if bbox is None:
        return None
    area = float(mask.sum())
    score = min(0.99, 0.5 + area / float(frame.shape[0] * frame.shape[1]))
    return bbox, round(score, 6)


def detect_face(frame):
    skin = _color_mask(frame, SKIN_BGR, 28)
    bbox = _mask_bbox(skin)
    if bbox is None or bbox[2] < 6 or bbox[3] < 6:
        return None
    return bbox


def _eyes(frame, face_bbox):
    """White eye blobs and dark pupils inside the face region."""
    x0, y0, w, h = (int(round(v)) for v in face_bbox)
    region = frame[max(0, y0) : y0 + h, max(0, x0) : x0 + w]
    white = np.all(region > 225, axis=2)
    dark = np.all(region < 70, axis=2)
    n, labels, stats, centroids = cv2.connectedComponentsWithStats(
        white.astype(np.uint8), connectivity=8
    )
    blobs = sorted(
        (
            (stats[i, cv2.CC_STAT_AREA], i)
            for i in range(1, n)
            if stats[i, cv2.CC_STAT_AREA] >= 2
        ),
        reverse=True,
    )[:2]
    eyes = []
    for _, i in blobs:
        ex = x0 + stats[i, cv2.CC_STAT_LEFT]
        ey = y0 + stats[i, cv2.CC_STAT_TOP]
        ew = stats[i, cv2.CC_STAT_WIDTH]
        eh = stats[i, cv2.CC_STAT_HEIGHT]
        blob_mask = labels == i
        pupil = dark & blob_mask
        if not pupil.any():
            # The pupil may cover the blob's hole; search the eye box instead.
            sub = dark[
                stats[i, cv2.CC_STAT_TOP] : stats[i, cv2.CC_STAT_TOP] + eh,
                stats[i, cv2.CC_STAT_LEFT] : stats[i, cv2.CC_STAT_LEFT] + ew,
            ]
            pys, pxs = np.where(sub)
            pupil_xy = (
                (x0 + stats[i, cv2.CC_STAT_LEFT] + float(pxs.mean()),
                 y0 + stats[i, cv2.CC_STAT_TOP] + float(pys.mean()))
                if pxs.size
                else None
            )
        else:
            pys, pxs = np.where(pupil)
            pupil_xy = (x0 + float(pxs.mean()), y0 + float(pys.mean()))
        eyes.append(
            {
                "center": (ex + ew / 2.0, ey + eh / 2.0),
                "width": float(ew),
                "height": float(eh),
                "pupil": pupil_xy,
            }
        )
    eyes.sort(key=lambda e: e["center"][0])
    return eyes


def _mouth(frame, face_bbox):
    x0, y0, w, h = (int(round(v)) for v in face_bbox)
    region = frame[max(0, y0) : y0 + h, max(0, x0) : x0 + w]
    mask = _color_mask(region, MOUTH_BGR, 45)
    bbox = _mask_bbox(mask)
    if bbox is None:
        return None
    return (x0 + bbox[0], y0 + bbox[1], bbox[2], bbox[3])


def _rot_zyx(roll, yaw, pitch):
    cz, sz = math.cos(roll), math.sin(roll)
    cy, sy = math.cos(yaw), math.sin(yaw)
    cx, sx = math.cos(pitch), math.sin(pitch)
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    return rz @ ry @ rx


def _rotate_about(points, center, roll):
    c, s = math.cos(roll), math.sin(roll)
    rot = np.array([[c, -s], [s, c]])
    return (points - center) @ rot.T + center


def place_landmarks(face_bbox, eyes, mouth, roll):
    """98 WFLW-layout points from measured face geometry.

    Contour points trace the face ellipse (so the convex hull covers the
    face); eye groups 60-67/68-75 and the outer mouth 76-87 carry the
    measured openness geometry, pupils sit at 96/97.
    """
    x0, y0, w, h = face_bbox
    cx, cy = x0 + w / 2.0, y0 + h / 2.0
    pts = np.zeros((98, 2), dtype=np.float64)

    t = np.linspace(0, 2 * np.pi, 33, endpoint=False)
    pts[0:33, 0] = cx + (w / 2.0) * np.cos(t)
    pts[0:33, 1] = cy + (h / 2.0) * np.sin(t)

    # Brows above the eyes, nose bridge and base in the middle.
    for k in range(9):
        f = k / 8.0
        pts[33 + k] = (cx - w * 0.35 + f * w * 0.25, cy - h * 0.28)
        pts[42 + k] = (cx + w * 0.10 + f * w * 0.25, cy - h * 0.28)
    for k in range(4):
        pts[51 + k] = (cx, cy - h * 0.10 + k * h * 0.06)
    for k in range(5):
        pts[55 + k] = (cx - w * 0.08 + k * w * 0.04, cy + h * 0.10)

    def eye_block(base, eye):
        ex, ey = eye["center"]
        half_w = max(eye["width"] / 2.0, 1.0)
        half_h = eye["height"] / 2.0
        pts[base] = (ex - half_w, ey)
        pts[base + 4] = (ex + half_w, ey)
        for k, f in enumerate((-0.5, 0.0, 0.5)):
            pts[base + 1 + k] = (ex + f * half_w, ey - half_h)
            pts[base + 7 - k] = (ex + f * half_w, ey + half_h)

    default_left = {"center": (cx - w * 0.22, cy - h * 0.10), "width": w * 0.2,
                    "height": 0.0, "pupil": None}
    default_right = {"center": (cx + w * 0.22, cy - h * 0.10), "width": w * 0.2,
                     "height": 0.0, "pupil": None}
    left = eyes[0] if len(eyes) >= 1 else default_left
    right = eyes[1] if len(eyes) >= 2 else default_right
    eye_block(60, left)
    eye_block(68, right)

    if mouth is None:
        mouth = (cx - w * 0.2, cy + h * 0.22, w * 0.4, h * 0.08)
    mx, my = mouth[0] + mouth[2] / 2.0, mouth[1] + mouth[3] / 2.0
    half_mw, half_mh = mouth[2] / 2.0, mouth[3] / 2.0
    pts[76] = (mx - half_mw, my)
    pts[82] = (mx + half_mw, my)
    for k, f in enumerate(np.linspace(-2 / 3, 2 / 3, 5)):
        pts[77 + k] = (mx + f * half_mw, my - half_mh)
        pts[87 - k] = (mx + f * half_mw, my + half_mh)
    inner = pts[76:88].copy()
    pts[88:96] = (inner[[1, 2, 3, 4, 5, 9, 10, 11]] - (mx, my)) * 0.7 + (mx, my)

    pts[96] = left["pupil"] if left.get("pupil") else left["center"]
    pts[97] = right["pupil"] if right.get("pupil") else right["center"]

    if abs(roll) > 1e-12:
        pts = _rotate_about(pts, np.array([cx, cy]), roll)
    return pts


def face_descriptor(frame, face_bbox):
    """512-dim thumbnail embedding: 16x16 grayscale + 16x16 hue, L2-normalized."""
    x0, y0, w, h = (int(round(v)) for v in face_bbox)
    x0, y0 = max(0, x0), max(0, y0)
    crop = frame[y0 : y0 + max(1, h), x0 : x0 + max(1, w)]
    gray = cv2.resize(cv2.cvtColor(crop, cv2.COLOR_BGR2GRAY), (16, 16),
                      interpolation=cv2.INTER_AREA)
    hue = cv2.resize(cv2.cvtColor(crop, cv2.COLOR_BGR2HSV)[:, :, 0], (16, 16),
                     interpolation=cv2.INTER_AREA)
    v = np.concatenate([gray.ravel(), hue.ravel()]).astype(np.float64)
    v -= v.mean()
    norm = np.linalg.norm(v)
    if norm < 1e-9:
        v = np.zeros(512)
        v[0] = 1.0
        return v
    return v / norm


def extract_keypoints(frame, face_bbox, eyes):
    """17 COCO keypoints: body joints by marker color, face from geometry."""
    kp = np.zeros((17, 3), dtype=np.float64)
    expected = math.pi * MARKER_RADIUS**2
    for idx, color in BODY_MARKER_BGR.items():
        mask = _color_mask(frame, color, 12)
        ys, xs = np.where(mask)
        if xs.size == 0:
            continue
        kp[idx] = (float(xs.mean()), float(ys.mean()), min(1.0, xs.size / expected))
    if face_bbox is not None:
        x0, y0, w, h = face_bbox
        kp[0] = (x0 + w / 2.0, y0 + h * 0.55, 0.9)
        kp[3] = (x0, y0 + h / 2.0, 0.8)
        kp[4] = (x0 + w, y0 + h / 2.0, 0.8)
        if len(eyes) >= 2:
            kp[1] = (*eyes[0]["center"], 0.9)
            kp[2] = (*eyes[1]["center"], 0.9)
        else:
            kp[1] = (x0 + w * 0.3, y0 + h * 0.4, 0.5)
            kp[2] = (x0 + w * 0.7, y0 + h * 0.4, 0.5)
    return kp


def analyze_frame(frame):
    """All classical measurements for one frame; None when no face is found."""
    person = detect_person(frame)
    face_bbox = detect_face(frame)
    result = {"person": person, "face": None}
    eyes = []
    if face_bbox is not None:
        eyes = _eyes(frame, face_bbox)
        mouth = _mouth(frame, face_bbox)
        x0, y0, w, h = face_bbox

        if len(eyes) == 2:
            dx = eyes[1]["center"][0] - eyes[0]["center"][0]
            dy = eyes[1]["center"][1] - eyes[0]["center"][1]
            roll = math.atan2(dy, dx)
            eye_mid_x = (eyes[0]["center"][0] + eyes[1]["center"][0]) / 2.0
            yaw = max(-0.6, min(0.6, 1.2 * (eye_mid_x - (x0 + w / 2.0)) / (w / 2.0)))
        else:
            roll, yaw = 0.0, 0.0
        if mouth is not None:
            mouth_rel = ((mouth[1] + mouth[3] / 2.0) - y0) / h
            pitch = max(-0.6, min(0.6, 1.5 * (mouth_rel - 0.72)))
        else:
            pitch = 0.0

        gaze = None
        if len(eyes) == 2 and eyes[0]["pupil"] and eyes[1]["pupil"]:
            gx = gy = 0.0
            for eye in eyes:
                half_w = max(eye["width"] / 2.0, 1.0)
                half_h = max(eye["height"] / 2.0, 1.0)
                gx += (eye["pupil"][0] - eye["center"][0]) / half_w
                gy += (eye["pupil"][1] - eye["center"][1]) / half_h
            gaze = (max(-1.0, min(1.0, gx / 2.0)), max(-1.0, min(1.0, gy / 2.0)))

        mouth_ratio = (mouth[3] / mouth[2]) if mouth and mouth[2] > 0 else 0.0
        attributes = {
            "gender": "female" if h / max(w, 1.0) > 1.15 else "male",
            "race": "White",
            "emotion": "happy" if mouth_ratio > 0.3 else "neutral",
        }

        result["face"] = {
            "bbox": face_bbox,
            "det_score": round(min(0.99, 0.6 + 0.4 * min(1.0, w * h / 900.0)), 6),
            "landmarks": place_landmarks(face_bbox, eyes, mouth, roll),
            "descriptor": face_descriptor(frame, face_bbox),
            "head_rot": _rot_zyx(roll, yaw, pitch),
            "gaze": gaze,
            "attributes": attributes,
        }
    result["keypoints"] = extract_keypoints(frame, face_bbox, eyes)
    return result


def extract(video_path, config: ExtractorConfig, out_prefix) -> dict:
    """Run extraction over a video; writes face/detection/pose files.

    Returns a summary with output paths, per-frame failure count and
    provenance.  Frames whose analysis fails are emitted with an empty face
    list and logged to stderr.
    """
    frames = read_video(video_path)
    frames = frames[:: config.frame_stride]
    height, width = frames[0].shape[:2]

    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    faces_path = Path(f"{prefix}_faces.jsonl")
    dets_path = Path(f"{prefix}_detections.jsonl")
    poses_path = Path(f"{prefix}_poses.jsonl")

    provenance = {
        "schema_version": config.schema_version,
        "backends": dict(config.backends),
        "device": config.device,
        "frame_stride": config.frame_stride,
        "attribute_estimators": "heuristic stand-ins (see module docs)",
    }
    face_lines = [
        json.dumps(
            {
                "video_id": config.video_id,
                "role": config.role,
                "width": width,
                "height": height,
                "frame_count": len(frames),
                "extractor": provenance,
            },
            sort_keys=True,
        )
    ]
    det_lines = []
    pose_lines = []
    failures = 0

    for idx, frame in enumerate(frames):
        image_id = f"{config.video_id}_f{idx:04d}"
        try:
            analysis = analyze_frame(frame)
        except Exception as exc:  # pragma: no cover - defensive per-frame guard
            failures += 1
            print(f"frame {idx}: extraction failed: {exc}", file=sys.stderr)
            face_lines.append(
                json.dumps(
                    {"video_id": config.video_id, "frame_idx": idx, "faces": []},
                    sort_keys=True,
                )
            )
            continue

        face = analysis["face"]
        if face is None:
            face_lines.append(
                json.dumps(
                    {"video_id": config.video_id, "frame_idx": idx, "faces": []},
                    sort_keys=True,
                )
            )
        else:
            record = {
                "video_id": config.video_id,
                "frame_idx": idx,
                "bbox": list(face["bbox"]),
                "det_score": face["det_score"],
                "descriptor": face["descriptor"].tolist(),
                "landmarks": face["landmarks"].tolist(),
                "head_rot": face["head_rot"].tolist(),
                "attributes": face["attributes"],
            }
            if face["gaze"] is not None:
                record["gaze"] = list(face["gaze"])
            face_lines.append(json.dumps(record, sort_keys=True))

        if analysis["person"] is not None:
            bbox, score = analysis["person"]
            instance_id = f"{image_id}_p0"
            det_lines.append(
                json.dumps(
                    {
                        "image_id": image_id,
                        "bbox": list(bbox),
                        "score": score,
                        "instance_id": instance_id,
                    },
                    sort_keys=True,
                )
            )
            pose_lines.append(
                json.dumps(
                    {
                        "image_id": image_id,
                        "bbox": list(bbox),
                        "score": score,
                        "keypoints": analysis["keypoints"].tolist(),
                        "instance_id": instance_id,
                    },
                    sort_keys=True,
                )
            )

    faces_path.write_text("\n".join(face_lines) + "\n", encoding="utf-8")
    dets_path.write_text("\n".join(det_lines) + ("\n" if det_lines else ""),
                         encoding="utf-8")
    poses_path.write_text("\n".join(pose_lines) + ("\n" if pose_lines else ""),
                          encoding="utf-8")
    return {
        "faces": str(faces_path),
        "detections": str(dets_path),
        "poses": str(poses_path),
        "frames": len(frames),
        "failures": failures,
        "provenance": provenance,
    }
