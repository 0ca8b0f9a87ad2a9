import json

import numpy as np
import pytest

from anoneval.streams import DESCRIPTOR_DIM


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def synthetic_landmarks(
    cx=320.0, cy=240.0, size=100.0, eye_open=0.3, mouth_open=0.4, jitter=None
):
    """98-point landmark set in the WFLW layout with exact openness ratios.

    Eye groups are built so that openness_ratio(landmarks, eye spec) equals
    ``eye_open`` exactly, and likewise for the mouth.
    """
    pts = np.zeros((98, 2), dtype=np.float64)
    # Face contour 0-32 on an ellipse arc.
    t = np.linspace(-0.2 * np.pi, 1.2 * np.pi, 33)
    pts[0:33, 0] = cx + 0.55 * size * np.cos(t)
    pts[0:33, 1] = cy + 0.7 * size * np.sin(t)
    # Brows 33-41 and 42-50.
    xs = np.linspace(-0.45, -0.05, 9)
    pts[33:42, 0] = cx + xs * size
    pts[33:42, 1] = cy - 0.35 * size
    pts[42:51, 0] = cx - xs[::-1] * size
    pts[42:51, 1] = cy - 0.35 * size
    # Nose 51-54 bridge, 55-59 bottom.
    pts[51:55, 0] = cx
    pts[51:55, 1] = cy + np.linspace(-0.2, 0.1, 4) * size
    pts[55:60, 0] = cx + np.linspace(-0.1, 0.1, 5) * size
    pts[55:60, 1] = cy + 0.15 * size

    def eye(x0, y0, w, h):
        block = np.zeros((8, 2))
        block[0] = (x0, y0)  # left corner
        block[4] = (x0 + w, y0)  # right corner
        for k, frac in enumerate((0.25, 0.5, 0.75)):
            block[1 + k] = (x0 + frac * w, y0 - h / 2)  # 61, 62, 63: top arc
            block[7 - k] = (x0 + frac * w, y0 + h / 2)  # 67, 66, 65: bottom arc
        return block

    eye_w = 0.24 * size
    pts[60:68] = eye(cx - 0.35 * size, cy - 0.15 * size, eye_w, eye_open * eye_w)
    pts[68:76] = eye(cx + 0.11 * size, cy - 0.15 * size, eye_w, eye_open * eye_w)

    # Outer mouth 76-87: corners 76/82, top arc 77-81, bottom arc 83-87.
    mouth_w = 0.5 * size
    mx0, my0 = cx - 0.25 * size, cy + 0.4 * size
    mouth = np.zeros((12, 2))
    mouth[0] = (mx0, my0)
    mouth[6] = (mx0 + mouth_w, my0)
    for k, frac in enumerate(np.linspace(1 / 6, 5 / 6, 5)):
        mouth[1 + k] = (mx0 + frac * mouth_w, my0 - mouth_open * mouth_w / 2)
        mouth[11 - k] = (mx0 + frac * mouth_w, my0 + mouth_open * mouth_w / 2)
    pts[76:88] = mouth
    # Inner mouth 88-95 and pupils 96-97.
    pts[88:96] = mouth[[1, 2, 3, 4, 5, 9, 10, 11]] * 0.98 + 0.02 * np.array([cx, cy])
    pts[96] = (cx - 0.23 * size, cy - 0.15 * size)
    pts[97] = (cx + 0.23 * size, cy - 0.15 * size)

    if jitter is not None:
        pts = pts + jitter
    return pts


def random_rotation(rng):
    """Uniform random rotation matrix from a normalized quaternion."""
    q = rng.normal(size=4)
    q = q / np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def unit_descriptor(rng, dim=DESCRIPTOR_DIM):
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def stream_header(video_id="vid", role="original", width=640, height=480, frame_count=10):
    return {
        "video_id": video_id,
        "role": role,
        "width": width,
        "height": height,
        "frame_count": frame_count,
    }


def record_obj(video_id="vid", frame_idx=0, bbox=(100, 100, 200, 200), det_score=0.9, **extra):
    obj = {
        "video_id": video_id,
        "frame_idx": frame_idx,
        "bbox": list(bbox),
        "det_score": det_score,
    }
    obj.update(extra)
    return obj


def stream_text(header, records):
    lines = [json.dumps(header)]
    lines.extend(json.dumps(r) for r in records)
    return "\n".join(lines) + "\n"


def synthetic_video_pair(
    video_id,
    rng,
    frame_count=100,
    width=640,
    height=480,
    drop_anon_frames=(),
):
    """Matched original/anonymized stream texts with full per-frame features."""
    base_desc = unit_descriptor(rng)
    anon_base = unit_descriptor(rng)
    orig_records = []
    anon_records = []
    for i in range(frame_count):
        cx = 320.0 + 40.0 * np.sin(2 * np.pi * i / frame_count)
        cy = 240.0 + 20.0 * np.cos(2 * np.pi * i / frame_count)
        eye = 0.25 + 0.1 * np.sin(0.3 * i)
        mouth = 0.4 + 0.15 * np.sin(0.17 * i)
        bbox = (cx - 80, cy - 90, 160, 180)
        gaze = (0.3 * np.sin(0.1 * i), -0.2 * np.cos(0.1 * i))
        yaw, pitch, roll = 0.1 * np.sin(0.1 * i), 0.02 * i / frame_count, 0.05 * np.sin(0.2 * i)

        def rec(base, delta, attrs, eye_o, mouth_o, rot_offset, gaze_offset):
            v = base + delta
            v = v / np.linalg.norm(v)
            lms = synthetic_landmarks(cx, cy, 100.0, eye_open=eye_o, mouth_open=mouth_o)
            rot = rot_z(roll + rot_offset) @ rot_y(yaw) @ rot_x(pitch)
            return record_obj(
                video_id=video_id,
                frame_idx=i,
                bbox=bbox,
                det_score=0.95,
                descriptor=v.tolist(),
                landmarks=lms.tolist(),
                head_rot=rot.tolist(),
                gaze=[gaze[0] + gaze_offset, gaze[1]],
                attributes=attrs,
            )

        orig_records.append(
            rec(base_desc, 0.01 * rng.normal(size=base_desc.shape),
                {"gender": "female", "race": "Asian", "emotion": "happy"},
                eye, mouth, 0.0, 0.0)
        )
        if i in drop_anon_frames:
            anon_records.append({"video_id": video_id, "frame_idx": i, "faces": []})
        else:
            anon_records.append(
                rec(anon_base, 0.02 * rng.normal(size=base_desc.shape),
                    {"gender": "female", "race": "Asian",
                     "emotion": "happy" if i % 3 else "neutral"},
                    eye * 0.9, mouth * 1.05, 0.01, 0.05)
            )
    orig = stream_text(
        stream_header(video_id, "original", width, height, frame_count), orig_records
    )
    anon = stream_text(
        stream_header(video_id, "anonymized", width, height, frame_count), anon_records
    )
    return orig, anon


@pytest.fixture(scope="session")
def fixture_videos(tmp_path_factory):
    """Three synthetic video pairs on disk, ~100 frames each."""
    root = tmp_path_factory.mktemp("fixture_videos")
    rng = np.random.default_rng(7)
    paths = []
    for k in range(3):
        orig, anon = synthetic_video_pair(f"video{k}", rng, frame_count=100)
        orig_path = root / f"video{k}_orig.jsonl"
        anon_path = root / f"video{k}_anon.jsonl"
        orig_path.write_text(orig)
        anon_path.write_text(anon)
        paths.append((orig_path, anon_path))
    return paths
