"""Per-frame face metrics between an original and an anonymized stream.

Generates a 30-frame synthetic video pair where the anonymized side has a
different identity descriptor, slightly squinted eyes and a small head-roll
offset, then prints the aggregated metric table.
"""

import numpy as np

from anoneval.face_metrics import evaluate_pairs
from anoneval.report import MetricReport, MetricStat, aggregate, emit_report
from anoneval.streams import FaceRecord, PairedFrameStream


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def eye_block(x0, y0, w, h):
    pts = np.zeros((8, 2))
    pts[0], pts[4] = (x0, y0), (x0 + w, y0)
    for k, f in enumerate((0.25, 0.5, 0.75)):
        pts[1 + k] = (x0 + f * w, y0 - h / 2)
        pts[7 - k] = (x0 + f * w, y0 + h / 2)
    return pts


def landmarks(eye_open, mouth_open, cx=320.0, cy=240.0, size=100.0):
    pts = np.zeros((98, 2))
    t = np.linspace(0, 2 * np.pi, 33)
    pts[0:33] = np.stack([cx + 55 * np.cos(t), cy + 70 * np.sin(t)], axis=1)
    pts[33:60] = pts[0]  # brows and nose parked on the contour for brevity
    ew = 0.24 * size
    pts[60:68] = eye_block(cx - 35, cy - 15, ew, eye_open * ew)
    pts[68:76] = eye_block(cx + 11, cy - 15, ew, eye_open * ew)
    mw = 0.5 * size
    mouth = np.zeros((12, 2))
    mouth[0], mouth[6] = (cx - 25, cy + 40), (cx - 25 + mw, cy + 40)
    for k, f in enumerate(np.linspace(1 / 6, 5 / 6, 5)):
        mouth[1 + k] = (cx - 25 + f * mw, cy + 40 - mouth_open * mw / 2)
        mouth[11 - k] = (cx - 25 + f * mw, cy + 40 + mouth_open * mw / 2)
    pts[76:88] = mouth
    pts[88:98] = mouth[1:11] * 0.98
    return pts


def record(rng, frame, base, eye_open, roll, emotion, gaze_shift=0.0):
    v = base + 0.01 * rng.normal(size=512)
    v /= np.linalg.norm(v)
    return FaceRecord(
        video_id="demo",
        frame_idx=frame,
        bbox=(240.0, 150.0, 160.0, 180.0),
        det_score=0.97,
        descriptor=v,
        landmarks=landmarks(eye_open, 0.4),
        head_rot=rot_z(roll),
        gaze=(0.2 * np.sin(0.3 * frame) + gaze_shift, -0.1),
        attributes={"gender": "female", "race": "White", "emotion": emotion},
    )


def main():
    rng = np.random.default_rng(5)
    orig_id = rng.normal(size=512)
    anon_id = rng.normal(size=512)
    pairs = []
    for i in range(30):
        eye = 0.3 + 0.05 * np.sin(0.4 * i)
        orig = record(rng, i, orig_id, eye, 0.02 * i, "happy")
        anon = record(rng, i, anon_id, eye * 0.85, 0.02 * i + 0.05,
                      "happy" if i % 4 else "surprise", gaze_shift=0.08)
        pairs.append((i, orig, anon))
    paired = PairedFrameStream(video_id="demo", pairs=pairs, skipped_frames=[])

    metrics = evaluate_pairs(paired)
    report = MetricReport(provenance={"demo": "02_face_metrics"})
    for name, (values, skipped) in metrics.items():
        if values:
            mean, std, n = aggregate(values)
            report.add(MetricStat(name, "frame", mean, std, n, skipped))
    print(emit_report(report, "markdown").decode())


if __name__ == "__main__":
    main()
