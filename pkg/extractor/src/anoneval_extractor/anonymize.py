"""Baseline anonymizer and backend adapters for the pipeline contract.

``black_rectangle`` is the trivial obscuring baseline: the face bbox of every
frame is filled with black, all other pixels stay untouched.  The two backend
commands implement the orchestrator's file-path contract with classical
tools: inpainting fills the masked face region from its surroundings
(Telea), face swapping pastes the identity image's face into every frame.
Both are deterministic, stand-in implementations of the same command shape
that production diffusion/face-swap tools are driven through.
"""

from __future__ import annotations

import json
from pathlib import Path

import cv2
import numpy as np

from .clip import read_video, write_frames
from .features import detect_face


def face_boxes_from_stream(stream_path) -> dict[int, list[tuple]]:
    """Per-frame face bboxes read from an engine face-stream file."""
    boxes: dict[int, list[tuple]] = {}
    with open(stream_path, "r", encoding="utf-8") as fh:
        first = True
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if first:
                first = False
                if "role" in obj and "frame_count" in obj:
                    continue
            if "bbox" not in obj:
                continue
            boxes.setdefault(int(obj["frame_idx"]), []).append(tuple(obj["bbox"]))
    return boxes


def black_rectangle(frames, boxes_per_frame) -> tuple[list[np.ndarray], list[int]]:
    """Fill the given face boxes with black; returns (frames, skipped idxs).

    Frames without boxes are left unchanged and reported.
    """
    out = []
    skipped = []
    for idx, frame in enumerate(frames):
        boxes = boxes_per_frame.get(idx, [])
        if not boxes:
            skipped.append(idx)
            out.append(frame.copy())
            continue
        anonymized = frame.copy()
        h, w = frame.shape[:2]
        for x, y, bw, bh in boxes:
            x0, y0 = max(0, int(np.floor(x))), max(0, int(np.floor(y)))
            x1 = min(w, int(np.ceil(x + bw)))
            y1 = min(h, int(np.ceil(y + bh)))
            anonymized[y0:y1, x0:x1] = 0
        out.append(anonymized)
    return out, skipped


def read_mask_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise IOError(f"'{path}' is not a binary PGM mask")
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1
    width, height, _ = (int(t) for t in tokens)
    return (
        np.frombuffer(data[pos : pos + width * height], dtype=np.uint8)
        .reshape(height, width)
        .copy()
    )


def inpaint_identity(input_video, mask_path, output_path, frame_idx: int = 0):
    """Generate the new-identity image by inpainting the masked face region."""
    frames = read_video(input_video)
    if not (0 <= frame_idx < len(frames)):
        raise IOError(f"reference frame {frame_idx} outside clip of {len(frames)}")
    frame = frames[frame_idx]
    mask = read_mask_pgm(mask_path)
    if mask.shape != frame.shape[:2]:
        mask = cv2.resize(mask, (frame.shape[1], frame.shape[0]),
                          interpolation=cv2.INTER_NEAREST)
    identity = cv2.inpaint(frame, (mask > 0).astype(np.uint8), 5, cv2.INPAINT_TELEA)
    out = Path(output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(out), identity):
        raise IOError(f"cannot write identity image '{out}'")
    return out


def faceswap_video(input_video, identity_path, output_dir):
    """Paste the identity image's face region onto every frame's face."""
    frames = read_video(input_video)
    identity = cv2.imread(str(identity_path), cv2.IMREAD_COLOR)
    if identity is None:
        raise IOError(f"cannot read identity image '{identity_path}'")
    id_box = detect_face(identity)
    if id_box is None:
        # Inpainted identities may have no detectable face; use the center crop.
        h, w = identity.shape[:2]
        id_box = (w * 0.25, h * 0.25, w * 0.5, h * 0.5)
    ix, iy, iw, ih = (int(round(v)) for v in id_box)
    id_face = identity[max(0, iy) : iy + ih, max(0, ix) : ix + iw]

    out_frames = []
    for frame in frames:
        box = detect_face(frame)
        if box is None:
            out_frames.append(frame.copy())
            continue
        x, y, w, h = (int(round(v)) for v in box)
        x, y = max(0, x), max(0, y)
        w = min(w, frame.shape[1] - x)
        h = min(h, frame.shape[0] - y)
        swapped = frame.copy()
        swapped[y : y + h, x : x + w] = cv2.resize(
            id_face, (w, h), interpolation=cv2.INTER_LINEAR
        )
        out_frames.append(swapped)
    return write_frames(output_dir, out_frames)
