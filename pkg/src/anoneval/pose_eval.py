"""Downstream pose-estimation evaluation: pseudo ground truth and COCO-style AP.

Protocol summary: person detections above a confidence threshold (strict
``score > conf_thr``, default 0.3) keep their pose estimates; duplicates are
removed with pose-based NMS (OKS similarity, default threshold 0.9); the
surviving instances form the pseudo ground truth.  Predictions are then scored
globally over all frames with average precision over the similarity threshold
sweep 0.50:0.05:0.95, using 101-point interpolated precision.  Similarity is
box IoU for detection AP and OKS for pose AP; an evaluation variant excludes
the five facial keypoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .errors import SchemaError, ValidationError

KEYPOINT_COUNT = 17

DEFAULT_CONF_THR = 0.3
DEFAULT_POSE_NMS_THR = 0.9


def _load_kappa_config():
    with resources.files("anoneval").joinpath("data/coco_oks_kappa.json").open() as fh:
        return json.load(fh)


_KAPPA_CONFIG = _load_kappa_config()
KEYPOINT_NAMES = tuple(_KAPPA_CONFIG["keypoint_names"])
DEFAULT_OKS_KAPPA = tuple(float(k) for k in _KAPPA_CONFIG["kappa"])
FACIAL_KEYPOINT_INDICES = tuple(_KAPPA_CONFIG["facial_keypoint_indices"])

DEFAULT_THRESHOLDS = tuple(round(0.50 + 0.05 * k, 2) for k in range(10))
RECALL_GRID = tuple(np.linspace(0.0, 1.0, 101))


@dataclass(frozen=True)
class DetectionInstance:
    image_id: str
    bbox: tuple[float, float, float, float]
    score: float
    instance_id: str | None = None

    def __post_init__(self):
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise ValidationError("detection bbox requires w > 0 and h > 0")
        if not (0.0 <= self.score <= 1.0):
            raise ValidationError("detection score must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class PoseInstance:
    image_id: str
    bbox: tuple[float, float, float, float]
    score: float
    keypoints: np.ndarray  # (17, 3): x, y, kp_score
    instance_id: str | None = None

    def __post_init__(self):
        kp = np.asarray(self.keypoints, dtype=np.float64)
        if kp.shape != (KEYPOINT_COUNT, 3):
            raise ValidationError(
                f"pose needs exactly {KEYPOINT_COUNT} keypoints, got shape {kp.shape}"
            )
        if np.any(kp[:, 2] < 0) or np.any(kp[:, 2] > 1):
            raise ValidationError("keypoint scores must lie in [0, 1]")
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise ValidationError("pose bbox requires w > 0 and h > 0")
        if not (0.0 <= self.score <= 1.0):
            raise ValidationError("pose score must lie in [0, 1]")
        object.__setattr__(self, "keypoints", kp)


@dataclass(eq=False)
class PseudoGtSet:
    """Per-image ground-truth substitutes plus generation provenance."""

    images: dict[str, list[PoseInstance]]
    provenance: dict

    def total_instances(self) -> int:
        return sum(len(v) for v in self.images.values())


@dataclass(frozen=True)
class EvalProtocol:
    similarity: str = "oks"  # "oks" or "iou"
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    keypoint_mask: tuple[bool, ...] = (True,) * KEYPOINT_COUNT
    oks_kappa: tuple[float, ...] = DEFAULT_OKS_KAPPA
    recall_grid: tuple[float, ...] = RECALL_GRID

    def __post_init__(self):
        if self.similarity not in ("oks", "iou"):
            raise ValidationError(f"unknown similarity '{self.similarity}'")
        t = self.thresholds
        if not t or any(b <= a for a, b in zip(t, t[1:])):
            raise ValidationError("thresholds must be strictly increasing")
        if any(x <= 0 or x > 1 for x in t):
            raise ValidationError("thresholds must lie in (0, 1]")
        if len(self.keypoint_mask) != KEYPOINT_COUNT:
            raise ValidationError("keypoint_mask must have 17 entries")
        if len(self.oks_kappa) != KEYPOINT_COUNT or any(k <= 0 for k in self.oks_kappa):
            raise ValidationError("oks_kappa must be 17 positive constants")


def iou(a, b) -> float:
    """Intersection over union of two [x, y, w, h] boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = min(ax + aw, bx + bw) - max(ax, bx)
    iy = min(ay + ah, by + bh) - max(ay, by)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (aw * ah + bw * bh - inter)


def oks(gt: PoseInstance, pred: PoseInstance, protocol: EvalProtocol) -> float:
    """Object keypoint similarity of a prediction against one GT instance.

    Mean over unmasked GT-visible keypoints (kp_score > 0) of
    exp(-d^2 / (2 * s^2 * kappa^2)) with s^2 the GT bbox area.
    """
    mask = np.asarray(protocol.keypoint_mask, dtype=bool)
    visible = (gt.keypoints[:, 2] > 0) & mask
    if not np.any(visible):
        raise ValidationError("GT instance has no visible unmasked keypoints")
    d2 = np.sum((gt.keypoints[visible, :2] - pred.keypoints[visible, :2]) ** 2, axis=1)
    s2 = gt.bbox[2] * gt.bbox[3]
    kappa = np.asarray(protocol.oks_kappa, dtype=np.float64)[visible]
    return float(np.mean(np.exp(-d2 / (2.0 * s2 * kappa**2))))


def _oks_or_zero(gt, pred, protocol):
    # NMS helper: a reference with no visible keypoints suppresses nothing.
    mask = np.asarray(protocol.keypoint_mask, dtype=bool)
    if not np.any((gt.keypoints[:, 2] > 0) & mask):
        return 0.0
    return oks(gt, pred, protocol)


def _greedy_nms(items, similarity, thr):
    order = sorted(range(len(items)), key=lambda i: (-items[i].score, i))
    kept: list[int] = []
    for i in order:
        if all(similarity(items[k], items[i]) <= thr for k in kept):
            kept.append(i)
    return [items[i] for i in kept]


def bbox_nms(dets: list[DetectionInstance], iou_thr: float) -> list[DetectionInstance]:
    """Greedy NMS by descending score; keeps boxes with IoU <= thr to all kept."""
    if not (0.0 < iou_thr < 1.0):
        raise ValidationError(f"iou_thr must lie in (0, 1), got {iou_thr}")
    return _greedy_nms(dets, lambda a, b: iou(a.bbox, b.bbox), iou_thr)


def pose_nms(
    instances: list[PoseInstance],
    oks_thr: float = DEFAULT_POSE_NMS_THR,
    protocol: EvalProtocol | None = None,
) -> list[PoseInstance]:
    """Greedy NMS with OKS similarity; the kept instance plays the GT role."""
    if not (0.0 < oks_thr < 1.0):
        raise ValidationError(f"oks_thr must lie in (0, 1), got {oks_thr}")
    protocol = protocol or EvalProtocol()
    return _greedy_nms(
        instances, lambda kept, cand: _oks_or_zero(kept, cand, protocol), oks_thr
    )


def build_pseudo_gt(
    dets: list[DetectionInstance],
    poses: list[PoseInstance],
    conf_thr: float = DEFAULT_CONF_THR,
    pose_nms_thr: float = DEFAULT_POSE_NMS_THR,
    protocol: EvalProtocol | None = None,
) -> PseudoGtSet:
    """Pseudo ground truth: confidence-filtered poses deduplicated by pose NMS.

    Poses are linked to their person detection by (image_id, instance_id); a
    pose survives iff its detection score is strictly above ``conf_thr``.
    """
    protocol = protocol or EvalProtocol()
    det_index: dict[tuple[str, str], DetectionInstance] = {}
    for det in dets:
        if det.instance_id is None:
            raise ValidationError("detections need instance_id to match poses")
        det_index[(det.image_id, det.instance_id)] = det

    surviving: dict[str, list[PoseInstance]] = {}
    kept_conf = 0
    for pose in poses:
        if pose.instance_id is None:
            raise ValidationError("poses need instance_id to match detections")
        det = det_index.get((pose.image_id, pose.instance_id))
        if det is None:
            raise ValidationError(
                f"dangling instance id '{pose.instance_id}' in image "
                f"'{pose.image_id}': no matching detection"
            )
        if det.score > conf_thr:
            surviving.setdefault(pose.image_id, []).append(pose)
            kept_conf += 1

    images = {
        image_id: pose_nms(instances, pose_nms_thr, protocol)
        for image_id, instances in sorted(surviving.items())
    }
    provenance = {
        "conf_thr": conf_thr,
        "conf_rule": "detection score strictly greater than conf_thr",
        "pose_nms_thr": pose_nms_thr,
        "source_detections": len(dets),
        "source_poses": len(poses),
        "after_confidence_filter": kept_conf,
        "after_pose_nms": sum(len(v) for v in images.values()),
    }
    return PseudoGtSet(images=images, provenance=provenance)


def _visible_mask(gt: PoseInstance, mask: np.ndarray) -> np.ndarray:
    return (gt.keypoints[:, 2] > 0) & mask


def _pr_points(gt_images, preds, sim_matrices, gt_count, threshold):
    """Cumulative (precision, recall) after each prediction in score order."""
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    matched = {img: np.zeros(len(gts), dtype=bool) for img, gts in gt_images.items()}
    tp = np.zeros(len(order), dtype=np.int64)
    for rank, i in enumerate(order):
        img = preds[i].image_id
        gts = gt_images.get(img)
        if not gts:
            continue
        sims = sim_matrices[img][:, i]
        free = ~matched[img]
        if not np.any(free):
            continue
        # Highest-similarity unmatched GT; ties resolved to the lowest index.
        local = np.where(free)[0]
        j = local[int(np.argmax(sims[local]))]
        if sims[j] >= threshold:
            matched[img][j] = True
            tp[rank] = 1
    tp_cum = np.cumsum(tp)
    ranks = np.arange(1, len(order) + 1)
    precision = tp_cum / ranks
    recall = tp_cum / gt_count
    return precision, recall


def _interpolated_ap(precision, recall, recall_grid):
    """Mean over the recall grid of running-max-from-the-right precision."""
    if precision.shape[0] == 0:
        return 0.0
    p_monotone = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, np.asarray(recall_grid), side="left")
    valid = idx < recall.shape[0]
    p_at = np.zeros(len(recall_grid), dtype=np.float64)
    p_at[valid] = p_monotone[idx[valid]]
    return float(np.mean(p_at))


def average_precision(
    gt: PseudoGtSet, preds, protocol: EvalProtocol | None = None
) -> tuple[float, dict[float, float]]:
    """COCO-protocol AP over the threshold sweep, reported x100.

    Per threshold, predictions are sorted globally by descending score and
    greedily matched to the unmatched same-image GT of highest similarity; a
    match is valid iff similarity >= threshold.  AP_t interpolates precision
    over the 101-point recall grid; the headline AP averages over thresholds.
    Returns (AP, {threshold: AP_t}), both in percent.
    """
    protocol = protocol or EvalProtocol()
    mask = np.asarray(protocol.keypoint_mask, dtype=bool)

    gt_images: dict[str, list[PoseInstance]] = {}
    for image_id, instances in gt.images.items():
        if protocol.similarity == "oks":
            usable = [g for g in instances if np.any(_visible_mask(g, mask))]
        else:
            usable = list(instances)
        if usable:
            gt_images[image_id] = usable
    gt_count = sum(len(v) for v in gt_images.values())
    if gt_count == 0:
        raise ValidationError("empty ground truth: recall is undefined")

    preds = list(preds)
    if not preds:
        return 0.0, {t: 0.0 for t in protocol.thresholds}

    if protocol.similarity == "iou":
        sim = lambda g, p: iou(g.bbox, p.bbox)
    else:
        sim = lambda g, p: oks(g, p, protocol)
    sim_matrices = {}
    for img, gts in gt_images.items():
        m = np.zeros((len(gts), len(preds)), dtype=np.float64)
        for row, g in enumerate(gts):
            for col, p in enumerate(preds):
                if p.image_id == img:
                    m[row, col] = sim(g, p)
        sim_matrices[img] = m

    per_threshold = {}
    for t in protocol.thresholds:
        precision, recall = _pr_points(gt_images, preds, sim_matrices, gt_count, t)
        per_threshold[t] = 100.0 * _interpolated_ap(
            precision, recall, protocol.recall_grid
        )
    ap = float(np.mean(list(per_threshold.values())))
    return ap, per_threshold


def evaluate_pose(
    gt: PseudoGtSet,
    preds: list[PoseInstance],
    exclude_face: bool = False,
    protocol: EvalProtocol | None = None,
) -> tuple[float, dict[float, float]]:
    """Keypoint AP with OKS similarity, optionally masking facial keypoints.

    With ``exclude_face`` the nose, eye and ear keypoints are removed from the
    OKS mean; GT instances left without visible keypoints are dropped.
    """
    protocol = protocol or EvalProtocol()
    mask = list(protocol.keypoint_mask)
    if exclude_face:
        for i in FACIAL_KEYPOINT_INDICES:
            mask[i] = False
    protocol = replace(protocol, similarity="oks", keypoint_mask=tuple(mask))
    return average_precision(gt, preds, protocol)


def evaluate_in_the_wild(
    gt: PseudoGtSet,
    anon_dets: list[DetectionInstance],
    anon_poses: list[PoseInstance],
    conf_thr: float = DEFAULT_CONF_THR,
    protocol: EvalProtocol | None = None,
    exclude_face: bool = False,
) -> tuple[float, dict[float, float]]:
    """Full-pipeline AP on anonymized footage against the pseudo GT.

    Anonymized-side poses are filtered by their detection confidence with the
    same strict rule as pseudo-GT generation, then scored with OKS; no NMS is
    applied on the prediction side.
    """
    det_index = {}
    for det in anon_dets:
        if det.instance_id is None:
            raise ValidationError("detections need instance_id to match poses")
        det_index[(det.image_id, det.instance_id)] = det
    filtered = []
    for pose in anon_poses:
        if pose.instance_id is None:
            raise ValidationError("poses need instance_id to match detections")
        det = det_index.get((pose.image_id, pose.instance_id))
        if det is None:
            raise ValidationError(
                f"dangling instance id '{pose.instance_id}' in image "
                f"'{pose.image_id}': no matching detection"
            )
        if det.score > conf_thr:
            filtered.append(pose)
    return evaluate_pose(gt, filtered, exclude_face=exclude_face, protocol=protocol)


# ---------------------------------------------------------------------------
# File formats: newline-delimited JSON records and the pseudo-GT JSON file.


def _parse_bbox(obj, line):
    raw = obj.get("bbox")
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise SchemaError("bbox cardinality: expected 4 values [x, y, w, h]", line)
    return tuple(float(v) for v in raw)


def parse_detections(data) -> list[DetectionInstance]:
    """Parse newline-delimited detection records."""
    out = []
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON ({exc.msg})", line_no) from exc
        for key in ("image_id", "bbox", "score"):
            if key not in obj:
                raise SchemaError(f"missing required field '{key}'", line_no)
        try:
            out.append(
                DetectionInstance(
                    image_id=str(obj["image_id"]),
                    bbox=_parse_bbox(obj, line_no),
                    score=float(obj["score"]),
                    instance_id=obj.get("instance_id"),
                )
            )
        except ValidationError as exc:
            raise SchemaError(str(exc), line_no) from exc
    return out


def parse_poses(data) -> list[PoseInstance]:
    """Parse newline-delimited pose records with 17 (x, y, score) keypoints."""
    out = []
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON ({exc.msg})", line_no) from exc
        for key in ("image_id", "bbox", "score", "keypoints"):
            if key not in obj:
                raise SchemaError(f"missing required field '{key}'", line_no)
        kp = obj["keypoints"]
        if not isinstance(kp, list) or len(kp) != KEYPOINT_COUNT:
            raise SchemaError(
                f"keypoint cardinality: expected {KEYPOINT_COUNT}, got {len(kp)}",
                line_no,
            )
        try:
            out.append(
                PoseInstance(
                    image_id=str(obj["image_id"]),
                    bbox=_parse_bbox(obj, line_no),
                    score=float(obj["score"]),
                    keypoints=np.asarray(kp, dtype=np.float64),
                    instance_id=obj.get("instance_id"),
                )
            )
        except ValidationError as exc:
            raise SchemaError(str(exc), line_no) from exc
    return out


def _pose_to_obj(pose: PoseInstance) -> dict:
    obj = {
        "image_id": pose.image_id,
        "bbox": list(pose.bbox),
        "score": pose.score,
        "keypoints": pose.keypoints.tolist(),
    }
    if pose.instance_id is not None:
        obj["instance_id"] = pose.instance_id
    return obj


def serialize_pseudo_gt(gt: PseudoGtSet) -> bytes:
    """Single JSON document: provenance block plus per-image instances."""
    doc = {
        "provenance": gt.provenance,
        "images": {
            image_id: [_pose_to_obj(p) for p in instances]
            for image_id, instances in sorted(gt.images.items())
        },
    }
    return (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode("utf-8")


def parse_pseudo_gt(data) -> PseudoGtSet:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    doc = json.loads(text)
    if "images" not in doc or "provenance" not in doc:
        raise SchemaError("pseudo-GT file needs 'images' and 'provenance'", 1)
    images = {}
    for image_id, instances in doc["images"].items():
        images[image_id] = [
            PoseInstance(
                image_id=str(obj["image_id"]),
                bbox=tuple(float(v) for v in obj["bbox"]),
                score=float(obj["score"]),
                keypoints=np.asarray(obj["keypoints"], dtype=np.float64),
                instance_id=obj.get("instance_id"),
            )
            for obj in instances
        ]
    return PseudoGtSet(images=images, provenance=doc["provenance"])
