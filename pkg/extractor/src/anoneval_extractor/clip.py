"""Synthetic test clip rendering and frame I/O.

The clip shows a simple figure on a grayscale gradient background: a
skin-tone head ellipse with white eyes, dark pupils and a red mouth, a
colored torso, and limbs whose joints are marked with unique saturated
colors.  Everything that the feature extractor later measures (eye openness,
gaze, head roll, mouth state, joint positions) is driven by smooth
deterministic motion, so extraction results are reproducible bit for bit.

A "video" is either a real video file readable by OpenCV or a directory of
``frame_%04d.png`` images; the directory form is what the synthetic tools
write, which keeps the toolchain independent of codec availability.
"""

from __future__ import annotations

import math
from pathlib import Path

import cv2
import numpy as np

FRAME_PATTERN = "frame_{:04d}.png"

SKIN_BGR = (150, 190, 230)
TORSO_BGR = (40, 60, 170)
LIMB_BGR = (90, 40, 130)
MOUTH_BGR = (60, 40, 200)

# Unique marker colors for the 12 body keypoints (COCO indices 5..16).
BODY_MARKER_BGR = {
    5: (0, 255, 255),
    6: (255, 0, 255),
    7: (255, 255, 0),
    8: (0, 128, 255),
    9: (128, 0, 255),
    10: (0, 255, 128),
    11: (255, 128, 0),
    12: (128, 255, 0),
    13: (0, 0, 255),
    14: (255, 0, 0),
    15: (0, 255, 0),
    16: (255, 0, 128),
}

MARKER_RADIUS = 2


def figure_params(i: int, n: int, size: int):
    """Deterministic motion parameters for frame i of n."""
    s = size / 128.0
    phase = 2 * math.pi * i / max(n, 1)
    head = (
        size * 0.5 + 18 * s * math.sin(phase),
        size * 0.32 + 5 * s * math.cos(phase),
    )
    return {
        "head_center": head,
        "head_axes": (16 * s, 20 * s),
        "eye_open": max(0.0, 0.28 + 0.22 * math.sin(0.9 * i)),
        "mouth_open": 0.35 + 0.25 * math.sin(0.6 * i),
        "gaze": (0.6 * math.sin(0.5 * i), 0.3 * math.cos(0.4 * i)),
        "sway": 6 * s * math.sin(phase),
        "scale": s,
    }


def body_joints(params, size):
    """17 keypoint positions; face points derive from the head geometry."""
    cx, cy = params["head_center"]
    ax, ay = params["head_axes"]
    s = params["scale"]
    sway = params["sway"]
    neck_y = cy + ay
    hip_y = neck_y + 34 * s
    joints = {
        0: (cx, cy + 2 * s),  # nose
        1: (cx - 7 * s, cy - 4 * s),  # left eye
        2: (cx + 7 * s, cy - 4 * s),  # right eye
        3: (cx - ax, cy),  # left ear
        4: (cx + ax, cy),  # right ear
        5: (cx - 12 * s, neck_y + 4 * s),
        6: (cx + 12 * s, neck_y + 4 * s),
        7: (cx - 16 * s + sway, neck_y + 16 * s),
        8: (cx + 16 * s - sway, neck_y + 16 * s),
        9: (cx - 18 * s + sway, neck_y + 28 * s),
        10: (cx + 18 * s - sway, neck_y + 28 * s),
        11: (cx - 8 * s, hip_y),
        12: (cx + 8 * s, hip_y),
        13: (cx - 9 * s - sway, hip_y + 16 * s),
        14: (cx + 9 * s + sway, hip_y + 16 * s),
        15: (cx - 10 * s - sway, hip_y + 30 * s),
        16: (cx + 10 * s + sway, hip_y + 30 * s),
    }
    return joints


def render_frame(i: int, n: int, size: int = 128, empty: bool = False) -> np.ndarray:
    """One BGR frame; ``empty`` renders background only (no figure)."""
    gradient = np.linspace(200, 235, size, dtype=np.uint8)
    frame = np.repeat(gradient[None, :], size, axis=0)
    frame = cv2.merge([frame, frame, frame])
    if empty:
        return frame

    p = figure_params(i, n, size)
    joints = body_joints(p, size)
    cx, cy = p["head_center"]
    ax, ay = p["head_axes"]
    s = p["scale"]

    def ipt(xy):
        return (int(round(xy[0])), int(round(xy[1])))

    # Torso and limbs under the markers.
    cv2.line(frame, ipt(joints[5]), ipt(joints[6]), TORSO_BGR, int(4 * s) + 1)
    for a, b in ((5, 11), (6, 12), (11, 12)):
        cv2.line(frame, ipt(joints[a]), ipt(joints[b]), TORSO_BGR, int(6 * s) + 1)
    for a, b in ((5, 7), (7, 9), (6, 8), (8, 10), (11, 13), (13, 15), (12, 14), (14, 16)):
        cv2.line(frame, ipt(joints[a]), ipt(joints[b]), LIMB_BGR, int(3 * s) + 1)

    # Head, eyes, pupils, mouth.
    cv2.ellipse(frame, ipt((cx, cy)), (int(ax), int(ay)), 0, 0, 360, SKIN_BGR, -1)
    eye_h = p["eye_open"] * 4 * s
    for side in (-1, 1):
        ecx, ecy = cx + side * 7 * s, cy - 4 * s
        if eye_h >= 0.75:
            cv2.ellipse(
                frame, ipt((ecx, ecy)), (int(3.5 * s), max(1, int(eye_h))),
                0, 0, 360, (255, 255, 255), -1,
            )
            px = ecx + p["gaze"][0] * 1.5 * s
            py = ecy + p["gaze"][1] * max(0.0, eye_h - 1)
            cv2.circle(frame, ipt((px, py)), max(1, int(1.2 * s)), (20, 20, 20), -1)
        else:
            cv2.line(
                frame,
                ipt((ecx - 3 * s, ecy)),
                ipt((ecx + 3 * s, ecy)),
                (90, 120, 150),
                1,
            )
    mouth_h = max(1, int(p["mouth_open"] * 5 * s))
    cv2.ellipse(
        frame, ipt((cx, cy + 10 * s)), (int(6 * s), mouth_h), 0, 0, 360, MOUTH_BGR, -1
    )

    # Joint markers last so they stay visible; face keypoints carry none.
    for idx, color in BODY_MARKER_BGR.items():
        cv2.circle(frame, ipt(joints[idx]), MARKER_RADIUS, color, -1)
    return frame


def render_clip(out_dir, frames: int = 10, size: int = 128, empty: bool = False):
    """Write the synthetic clip as a directory of PNG frames."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(frames):
        frame = render_frame(i, frames, size, empty=empty)
        path = out / FRAME_PATTERN.format(i)
        cv2.imwrite(str(path), frame)
        paths.append(path)
    return paths


def read_video(path) -> list[np.ndarray]:
    """Frames of a video file or of a frame directory, in order (BGR)."""
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("*.png")) + sorted(p.glob("*.jpg"))
        if not files:
            raise IOError(f"no frames found in directory '{p}'")
        return [cv2.imread(str(f), cv2.IMREAD_COLOR) for f in files]
    if not p.exists():
        raise IOError(f"video '{p}' does not exist")
    cap = cv2.VideoCapture(str(p))
    if not cap.isOpened():
        raise IOError(f"cannot open video '{p}'")
    frames = []
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        frames.append(frame)
    cap.release()
    if not frames:
        raise IOError(f"video '{p}' has no readable frames")
    return frames


def write_frames(out_dir, frames) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        path = out / FRAME_PATTERN.format(i)
        cv2.imwrite(str(path), frame)
        paths.append(path)
    return paths
