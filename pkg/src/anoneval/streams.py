"""Face feature streams: record format, parsing, validation and pairing.

A face-stream file is newline-delimited JSON (UTF-8).  The first line is a
header carrying ``video_id``, ``role``, ``width``, ``height`` and
``frame_count``; every following line is one frame-face observation with the
fields of :class:`FaceRecord`.  A line with ``"faces": []`` (and no bbox)
marks a frame that was processed but contained no detection.  Floats are
written in shortest exact round-trip form, so no precision is lost.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import FrameOrderError, PairingError, RoleMismatchError, SchemaError

ROLES = ("original", "anonymized")

DESCRIPTOR_DIM = 512
LANDMARK_COUNT = 98

GENDER_LABELS = frozenset({"male", "female"})
RACE_LABELS = frozenset(
    {"Indian", "Asian", "Latino Hispanic", "Black", "Middle Eastern", "White"}
)
EMOTION_LABELS = frozenset(
    {"sad", "angry", "surprise", "fear", "happy", "disgust", "neutral"}
)
ATTRIBUTE_VOCABULARIES = {
    "gender": GENDER_LABELS,
    "race": RACE_LABELS,
    "emotion": EMOTION_LABELS,
}

SKIP_NO_FACE_ORIGINAL = "no_face_original"
SKIP_NO_FACE_ANONYMIZED = "no_face_anonymized"
SKIP_NO_MATCH = "no_match"


@dataclass(frozen=True, eq=False)
class FaceRecord:
    """One face observed in one frame.

    Optional fields are None when the upstream extractor did not produce
    them; metrics that need an absent field skip the frame and count it.
    """

    video_id: str
    frame_idx: int
    bbox: tuple[float, float, float, float]  # x, y, w, h in pixels
    det_score: float
    descriptor: np.ndarray | None = None  # (512,) unit L2 norm
    landmarks: np.ndarray | None = None  # (98, 2) pixel coordinates
    head_rot: np.ndarray | None = None  # (3, 3) row-major world-to-camera
    gaze: tuple[float, float] | None = None  # each in [-1, 1]
    attributes: dict[str, str] | None = None

    def bbox_area(self) -> float:
        return self.bbox[2] * self.bbox[3]


@dataclass(eq=False)
class VideoFaceStream:
    video_id: str
    role: str
    frames: list[tuple[int, list[FaceRecord]]]
    frame_count: int
    width: int
    height: int

    def faces_at(self, frame_idx: int) -> list[FaceRecord]:
        for idx, faces in self.frames:
            if idx == frame_idx:
                return faces
        return []

    def frames_with_faces(self) -> list[int]:
        return [idx for idx, faces in self.frames if faces]


@dataclass(eq=False)
class PairedFrameStream:
    """Time-aligned (original, anonymized) record pairs for one video."""

    video_id: str
    pairs: list[tuple[int, FaceRecord, FaceRecord]]
    skipped_frames: list[tuple[int, str]]


def _require(obj, key, line, kind=float):
    if key not in obj:
        raise SchemaError(f"missing required field '{key}'", line)
    return obj[key]


def _validate_bbox(raw, line):
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise SchemaError("bbox cardinality: expected 4 values [x, y, w, h]", line)
    bbox = tuple(float(v) for v in raw)
    if not all(math.isfinite(v) for v in bbox):
        raise SchemaError("bbox contains non-finite values", line)
    if bbox[2] <= 0 or bbox[3] <= 0:
        raise SchemaError("bbox requires w > 0 and h > 0", line)
    return bbox


def _validate_descriptor(raw, line):
    if len(raw) != DESCRIPTOR_DIM:
        raise SchemaError(
            f"descriptor cardinality: expected {DESCRIPTOR_DIM}, got {len(raw)}", line
        )
    v = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise SchemaError("descriptor contains non-finite values", line)
    norm = float(np.linalg.norm(v))
    if norm < 1e-12:
        raise SchemaError("descriptor has zero norm and cannot be normalized", line)
    return v / norm


def _validate_landmarks(raw, line):
    if len(raw) != LANDMARK_COUNT:
        raise SchemaError(
            f"landmark cardinality: expected {LANDMARK_COUNT}, got {len(raw)}", line
        )
    pts = np.asarray(raw, dtype=np.float64)
    if pts.shape != (LANDMARK_COUNT, 2) or not np.all(np.isfinite(pts)):
        raise SchemaError("landmarks must be 98 finite (x, y) points", line)
    return pts


def _validate_head_rot(raw, line):
    R = np.asarray(raw, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise SchemaError("head_rot must be a finite 3x3 matrix", line)
    if not np.allclose(R.T @ R, np.eye(3), atol=1e-5):
        raise SchemaError("head_rot is not orthonormal (R^T R != I within 1e-5)", line)
    if abs(np.linalg.det(R) - 1.0) > 1e-5:
        raise SchemaError("head_rot determinant differs from +1 by more than 1e-5", line)
    return R


def _validate_attributes(raw, line):
    if not isinstance(raw, dict):
        raise SchemaError("attributes must be an object", line)
    out = {}
    for key, value in raw.items():
        vocab = ATTRIBUTE_VOCABULARIES.get(key)
        if vocab is None:
            raise SchemaError(f"unknown attribute '{key}'", line)
        if value not in vocab:
            raise SchemaError(f"attribute {key}: label '{value}' not in vocabulary", line)
        out[key] = value
    return out


def parse_face_record(obj: dict, line: int | None = None) -> FaceRecord:
    """Validate one JSON object into a FaceRecord, enforcing all invariants."""
    video_id = _require(obj, "video_id", line)
    frame_idx = _require(obj, "frame_idx", line)
    if not isinstance(frame_idx, int) or frame_idx < 0:
        raise SchemaError("frame_idx must be a non-negative integer", line)
    bbox = _validate_bbox(_require(obj, "bbox", line), line)
    det_score = float(_require(obj, "det_score", line))
    if not (0.0 <= det_score <= 1.0):
        raise SchemaError("det_score must lie in [0, 1]", line)

    descriptor = landmarks = head_rot = None
    gaze = attributes = None
    if obj.get("descriptor") is not None:
        descriptor = _validate_descriptor(obj["descriptor"], line)
    if obj.get("landmarks") is not None:
        landmarks = _validate_landmarks(obj["landmarks"], line)
    if obj.get("head_rot") is not None:
        head_rot = _validate_head_rot(obj["head_rot"], line)
    if obj.get("gaze") is not None:
        raw = obj["gaze"]
        if not isinstance(raw, (list, tuple)) or len(raw) != 2:
            raise SchemaError("gaze cardinality: expected 2 values", line)
        gx, gy = (float(v) for v in raw)
        if not (math.isfinite(gx) and math.isfinite(gy)):
            raise SchemaError("gaze contains non-finite values", line)
        gaze = (min(1.0, max(-1.0, gx)), min(1.0, max(-1.0, gy)))
    if obj.get("attributes") is not None:
        attributes = _validate_attributes(obj["attributes"], line)

    return FaceRecord(
        video_id=str(video_id),
        frame_idx=frame_idx,
        bbox=bbox,
        det_score=det_score,
        descriptor=descriptor,
        landmarks=landmarks,
        head_rot=head_rot,
        gaze=gaze,
        attributes=attributes,
    )


def parse_face_stream(data, expected_role: str | None = None) -> VideoFaceStream:
    """Parse a face-stream file into a validated VideoFaceStream.

    ``data`` may be bytes, a text string, or a file-like object.  Descriptors
    are re-normalized on ingest and gaze components clamped to [-1, 1].
    Schema violations raise with the offending 1-based line number.
    """
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    elif isinstance(data, str):
        text = data
    elif isinstance(data, io.IOBase) or hasattr(data, "read"):
        raw = data.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    else:
        raise TypeError(f"unsupported input type {type(data)!r}")

    header = None
    frames: list[tuple[int, list[FaceRecord]]] = []
    empty_marked: set[int] = set()
    last_idx = -1

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        stripped = raw_line.strip()
        if not stripped:
            continue
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON ({exc.msg})", line_no) from exc
        if not isinstance(obj, dict):
            raise SchemaError("each line must be a JSON object", line_no)

        if header is None:
            for key in ("video_id", "role", "width", "height", "frame_count"):
                if key not in obj:
                    raise SchemaError(f"header missing required field '{key}'", line_no)
            if obj["role"] not in ROLES:
                raise SchemaError(f"role must be one of {sorted(ROLES)}", line_no)
            if expected_role is not None and obj["role"] != expected_role:
                raise RoleMismatchError(
                    f"expected role '{expected_role}', stream declares '{obj['role']}'",
                    line_no,
                )
            for key in ("width", "height", "frame_count"):
                if not isinstance(obj[key], int) or obj[key] <= 0:
                    raise SchemaError(f"header field '{key}' must be a positive integer", line_no)
            header = obj
            continue

        frame_idx = obj.get("frame_idx")
        if not isinstance(frame_idx, int) or frame_idx < 0:
            raise SchemaError("frame_idx must be a non-negative integer", line_no)
        if frame_idx < last_idx:
            raise FrameOrderError(
                f"non-monotone frame_idx: {frame_idx} after {last_idx}", line_no
            )
        if frame_idx >= header["frame_count"]:
            raise SchemaError(
                f"frame_idx {frame_idx} outside frame_count {header['frame_count']}",
                line_no,
            )

        if obj.get("faces") == [] and "bbox" not in obj:
            # Empty-frame marker: the frame was processed, no face was found.
            if frames and frames[-1][0] == frame_idx and frames[-1][1]:
                raise SchemaError(
                    "empty-frame marker conflicts with face records at same frame", line_no
                )
            if frame_idx != last_idx:
                frames.append((frame_idx, []))
            empty_marked.add(frame_idx)
            last_idx = frame_idx
            continue

        record = parse_face_record(obj, line_no)
        if record.video_id != header["video_id"]:
            raise SchemaError(
                f"record video_id '{record.video_id}' differs from header "
                f"'{header['video_id']}'",
                line_no,
            )
        if frame_idx in empty_marked:
            raise SchemaError(
                "face record conflicts with empty-frame marker at same frame", line_no
            )
        if frames and frames[-1][0] == frame_idx:
            frames[-1][1].append(record)
        else:
            frames.append((frame_idx, [record]))
        last_idx = frame_idx

    if header is None:
        raise SchemaError("stream has no header line", 1)

    return VideoFaceStream(
        video_id=header["video_id"],
        role=header["role"],
        frames=frames,
        frame_count=header["frame_count"],
        width=header["width"],
        height=header["height"],
    )


def _record_to_obj(record: FaceRecord) -> dict:
    obj = {
        "video_id": record.video_id,
        "frame_idx": record.frame_idx,
        "bbox": list(record.bbox),
        "det_score": record.det_score,
    }
    if record.descriptor is not None:
        obj["descriptor"] = record.descriptor.tolist()
    if record.landmarks is not None:
        obj["landmarks"] = record.landmarks.tolist()
    if record.head_rot is not None:
        obj["head_rot"] = record.head_rot.tolist()
    if record.gaze is not None:
        obj["gaze"] = list(record.gaze)
    if record.attributes is not None:
        obj["attributes"] = dict(sorted(record.attributes.items()))
    return obj


def serialize_face_stream(stream: VideoFaceStream) -> bytes:
    """Serialize a stream back to the newline-delimited file format."""
    lines = [
        json.dumps(
            {
                "video_id": stream.video_id,
                "role": stream.role,
                "width": stream.width,
                "height": stream.height,
                "frame_count": stream.frame_count,
            },
            sort_keys=True,
        )
    ]
    for frame_idx, faces in stream.frames:
        if not faces:
            lines.append(
                json.dumps(
                    {"video_id": stream.video_id, "frame_idx": frame_idx, "faces": []},
                    sort_keys=True,
                )
            )
        for record in faces:
            lines.append(json.dumps(_record_to_obj(record), sort_keys=True))
    return ("\n".join(lines) + "\n").encode("utf-8")


def bbox_iou(a, b) -> float:
    """Intersection over union of two [x, y, w, h] boxes."""
    ax0, ay0, aw, ah = a
    bx0, by0, bw, bh = b
    ix = min(ax0 + aw, bx0 + bw) - max(ax0, bx0)
    iy = min(ay0 + ah, by0 + bh) - max(ay0, by0)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (aw * ah + bw * bh - inter)


def _match_faces_greedy(orig, anon, iou_thr):
    """Greedy descending-IoU matching between two face lists of one frame."""
    candidates = []
    for i, o in enumerate(orig):
        for j, a in enumerate(anon):
            iou = bbox_iou(o.bbox, a.bbox)
            if iou >= iou_thr:
                candidates.append((iou, i, j))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    used_o: set[int] = set()
    used_a: set[int] = set()
    matches = []
    for iou, i, j in candidates:
        if i in used_o or j in used_a:
            continue
        used_o.add(i)
        used_a.add(j)
        matches.append((i, j))
    matches.sort()
    return matches


def pair_streams(
    original: VideoFaceStream, anonymized: VideoFaceStream, iou_thr: float = 0.3
) -> PairedFrameStream:
    """Time-align two streams, matching faces within each frame by bbox IoU.

    Faces are matched greedily by descending IoU; candidate pairs with IoU
    below ``iou_thr`` are rejected.  Frames where either side has no face, or
    no candidate survives the threshold, are recorded in ``skipped_frames``.
    """
    if original.video_id != anonymized.video_id:
        raise PairingError(
            f"video_id mismatch: '{original.video_id}' vs '{anonymized.video_id}'"
        )
    if original.frame_count != anonymized.frame_count:
        raise PairingError(
            f"frame_count mismatch: {original.frame_count} vs {anonymized.frame_count}"
        )
    if not (0.0 < iou_thr < 1.0):
        raise PairingError(f"iou_thr must lie in (0, 1), got {iou_thr}")

    orig_by_frame = dict(original.frames)
    anon_by_frame = dict(anonymized.frames)
    pairs = []
    skipped = []
    for frame_idx in sorted(set(orig_by_frame) | set(anon_by_frame)):
        orig_faces = orig_by_frame.get(frame_idx, [])
        anon_faces = anon_by_frame.get(frame_idx, [])
        if not orig_faces:
            skipped.append((frame_idx, SKIP_NO_FACE_ORIGINAL))
            continue
        if not anon_faces:
            skipped.append((frame_idx, SKIP_NO_FACE_ANONYMIZED))
            continue
        matches = _match_faces_greedy(orig_faces, anon_faces, iou_thr)
        if not matches:
            skipped.append((frame_idx, SKIP_NO_MATCH))
            continue
        for i, j in matches:
            pairs.append((frame_idx, orig_faces[i], anon_faces[j]))

    return PairedFrameStream(
        video_id=original.video_id, pairs=pairs, skipped_frames=skipped
    )
