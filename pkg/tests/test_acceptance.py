"""Acceptance suite: one test per criterion, one PASS line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; the whole file is part of the default ``pytest`` run.  Stated runtime
budgets are asserted inside the relevant tests.
"""

import json
import sys
import time

import numpy as np
import pytest

from anoneval.cli import run
from anoneval.face_metrics import evaluate_pairs, rotation_difference
from anoneval.geometry import convex_hull, rasterize_mask
from anoneval.pose_eval import (
    DEFAULT_THRESHOLDS,
    RECALL_GRID,
    DetectionInstance,
    EvalProtocol,
    PseudoGtSet,
    average_precision,
    build_pseudo_gt,
    evaluate_in_the_wild,
    evaluate_pose,
)
from anoneval.streams import pair_streams, parse_face_stream
from anoneval.video_metrics import (
    descriptor_series,
    identity_variance,
    landmark_correlation,
    trajectory_set,
)

from conftest import rot_x, rot_y, rot_z, random_rotation, synthetic_landmarks
from oracles import make_pose, oracle_ap, oracle_iou, oracle_oks, random_instances
from test_geometry import brute_force_hull, point_in_polygon_oracle, star_polygon


def _report(name):
    print(f"\nACCEPTANCE {name}: PASS")


def test_ap_oracle_equivalence_200_instances():
    """AP (IoU and OKS) matches the brute-force PR oracle within 1e-9."""
    start = time.perf_counter()
    rng = np.random.default_rng(90210)
    protocol_oks = EvalProtocol(similarity="oks")
    protocol_iou = EvalProtocol(similarity="iou")
    checked = 0
    trials = 0
    while checked < 200:
        trials += 1
        gt_by_image, preds = random_instances(rng, n_images=int(rng.integers(1, 5)))
        if not preds:
            continue
        gt = PseudoGtSet(images=gt_by_image, provenance={})

        ours, _ = average_precision(gt, preds, protocol_oks)
        expected, _ = oracle_ap(
            gt_by_image,
            preds,
            lambda g, p: oracle_oks(
                g, p, protocol_oks.oks_kappa, protocol_oks.keypoint_mask
            ),
            protocol_oks.thresholds,
            protocol_oks.recall_grid,
        )
        assert abs(ours - expected) < 1e-9, f"OKS AP mismatch on trial {trials}"

        dets = [DetectionInstance(p.image_id, p.bbox, p.score) for p in preds]
        ours_iou, _ = average_precision(gt, dets, protocol_iou)
        expected_iou, _ = oracle_ap(
            gt_by_image,
            dets,
            lambda g, p: oracle_iou(g.bbox, p.bbox),
            protocol_iou.thresholds,
            protocol_iou.recall_grid,
        )
        assert abs(ours_iou - expected_iou) < 1e-9, f"IoU AP mismatch on trial {trials}"
        checked += 1
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"AP oracle run took {elapsed:.1f}s, budget 10s"
    _report(f"AP oracle equivalence (200 instances, {elapsed:.1f}s)")


def test_protocol_constants_pinned():
    """Strict >0.3 filter, 0.50:0.05:0.95 sweep, 101-point interpolation."""
    # Threshold sweep and recall grid.
    assert DEFAULT_THRESHOLDS == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
    assert len(RECALL_GRID) == 101
    assert RECALL_GRID[0] == 0.0 and RECALL_GRID[-1] == 1.0
    np.testing.assert_allclose(RECALL_GRID, np.linspace(0, 1, 101), atol=1e-15)

    # Strict inequality at the confidence boundary.
    rng = np.random.default_rng(5)
    scores = [0.9, 0.5, 0.31, 0.30, 0.1]
    dets = [
        DetectionInstance("img0", (100.0 * k, 0.0, 50.0, 100.0), s, instance_id=f"i{k}")
        for k, s in enumerate(scores)
    ]
    poses = [
        make_pose("img0", (100.0 * k, 0.0, 50.0, 100.0), 0.8, instance_id=f"i{k}", rng=rng)
        for k in range(5)
    ]
    gt = build_pseudo_gt(dets, poses)  # library default conf_thr
    assert gt.provenance["conf_thr"] == 0.3
    assert gt.provenance["after_confidence_filter"] == 3, "0.30 must NOT survive"
    _report("protocol constants (strict >0.3, 0.50:0.05:0.95, 101-point grid)")


def test_self_evaluation_identities():
    """Pipeline outputs scored against their own pseudo GT give exactly 100."""
    rng = np.random.default_rng(11)
    dets, poses = [], []
    for i in range(4):
        for k in range(2):
            iid = f"i{i}_{k}"
            bbox = (30.0 + 120 * k, 40.0, 80.0, 160.0)
            dets.append(DetectionInstance(f"img{i}", bbox, 0.9, instance_id=iid))
            poses.append(make_pose(f"img{i}", bbox, 0.9, instance_id=iid, rng=rng))
    gt = build_pseudo_gt(dets, poses, conf_thr=0.3)
    ap_wild, _ = evaluate_in_the_wild(gt, dets, poses, conf_thr=0.3)
    assert ap_wild == 100.0

    # Facial-keypoint exclusion: preds equal GT except displaced face points.
    preds = []
    for instances in gt.images.values():
        for g in instances:
            kp = g.keypoints.copy()
            kp[:5, :2] += 1e6
            preds.append(make_pose(g.image_id, g.bbox, 0.9, kp))
    ap_masked, _ = evaluate_pose(gt, preds, exclude_face=True)
    assert ap_masked == 100.0
    _report("self-evaluation identities (AP == 100.0 exactly)")


def _self_paired_stream(rng):
    from conftest import synthetic_video_pair

    orig_text, _ = synthetic_video_pair("selfie", rng, frame_count=40)
    stream = parse_face_stream(orig_text, "original")
    return stream, pair_streams(stream, stream)


def test_metric_identities_stream_with_itself():
    """A stream paired with itself: all differences 0, all ratios 1."""
    rng = np.random.default_rng(23)
    stream, paired = _self_paired_stream(rng)
    assert len(paired.pairs) == 40

    metrics = evaluate_pairs(paired)
    for key, expected in [
        ("identity_cos_dist", 0.0),
        ("gaze_diff", 0.0),
        ("eye_openness_diff", 0.0),
        ("mouth_openness_diff", 0.0),
        ("angle_diff_x", 0.0),
        ("angle_diff_y", 0.0),
        ("angle_diff_z", 0.0),
    ]:
        values, skipped = metrics[key]
        assert skipped == 0
        assert all(abs(v - expected) < 1e-12 for v in values), key
    for key in ("gender_match", "race_match", "emotion_match"):
        values, _ = metrics[key]
        assert sum(values) / len(values) == 1.0

    corr, skipped = landmark_correlation(trajectory_set(stream), trajectory_set(stream))
    assert abs(corr - 1.0) < 1e-12

    series = descriptor_series(stream)
    own = identity_variance(series)
    assert abs(identity_variance(list(series)) - own) < 1e-12
    constant = [series[0]] * 10
    assert abs(identity_variance(constant)) < 1e-12
    _report("metric identities on self-paired stream (exact to 1e-12)")


def test_geometry_oracles():
    """Hull vs O(n^3) oracle on 100 sets; rasterization vs pixel oracle."""
    start = time.perf_counter()
    rng = np.random.default_rng(31337)
    for _ in range(100):
        pts = rng.uniform(0, 100, size=(200, 2))
        np.testing.assert_array_equal(convex_hull(pts).vertices, brute_force_hull(pts))

    for _ in range(50):
        poly = star_polygon(rng, int(rng.integers(4, 10)))
        mask = rasterize_mask(poly, 64, 64)
        verts = [tuple(v) for v in poly.vertices]
        oracle = np.array(
            [
                [point_in_polygon_oracle(j + 0.5, i + 0.5, verts) for j in range(64)]
                for i in range(64)
            ]
        )
        np.testing.assert_array_equal(mask.bits, oracle)
    elapsed = time.perf_counter() - start
    assert elapsed < 20.0, f"geometry oracle run took {elapsed:.1f}s, budget 20s"
    _report(f"geometry oracles (100 hulls + 50 rasterizations, {elapsed:.1f}s)")


def test_rotation_decomposition_1000_pairs():
    """Recomposition reconstructs dR within Frobenius 1e-9, incl. near gimbal."""
    rng = np.random.default_rng(47)

    def check(R_o, R_a):
        delta = R_o @ R_a.T
        a_x, a_y, a_z = rotation_difference(R_o, R_a, signed=True)
        recomposed = rot_z(a_z) @ rot_y(a_y) @ rot_x(a_x)
        err = np.linalg.norm(recomposed - delta)
        assert err < 1e-9, f"Frobenius error {err:.2e}"

    count = 0
    for _ in range(1000):
        check(random_rotation(rng), random_rotation(rng))
        count += 1

    # Near-gimbal band |dR31| > 1 - 1e-6 (regular branch still applies).
    for delta_angle in (5e-4, 8e-4, 1.2e-3):
        for sign in (1.0, -1.0):
            pitch = sign * (np.pi / 2 - delta_angle)
            R_a = random_rotation(rng)
            R_o = (rot_z(rng.uniform(-3, 3)) @ rot_y(pitch) @ rot_x(rng.uniform(-3, 3))) @ R_a
            d31 = (R_o @ R_a.T)[2, 0]
            assert 1 - 1e-6 < abs(d31) <= 1 - 1e-7
            check(R_o, R_a)
            count += 1
    # Exact gimbal poles: R_a = I keeps |dR31| == 1 bit-exact, where the
    # alpha_z = 0 fallback reconstructs exactly.
    for sign in (1.0, -1.0):
        R_o = rot_z(rng.uniform(-3, 3)) @ rot_y(sign * np.pi / 2) @ rot_x(rng.uniform(-3, 3))
        assert abs(R_o[2, 0]) >= 1 - 1e-12
        check(R_o, np.eye(3))
        count += 1
    _report(f"rotation decomposition ({count} pairs incl. near-gimbal)")


@pytest.fixture(scope="module")
def pose_fixture_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_pose")
    rng = np.random.default_rng(99)
    det_lines, pose_lines = [], []
    for i in range(6):
        for k in range(2):
            iid = f"i{i}_{k}"
            bbox = [30.0 + 130 * k, 40.0, 80.0, 160.0]
            kp = np.zeros((17, 3))
            kp[:, 0] = rng.uniform(bbox[0], bbox[0] + bbox[2], size=17)
            kp[:, 1] = rng.uniform(bbox[1], bbox[1] + bbox[3], size=17)
            kp[:, 2] = rng.uniform(0.5, 1.0, size=17)
            det_lines.append(
                json.dumps(
                    {"image_id": f"img{i}", "bbox": bbox, "score": 0.9, "instance_id": iid}
                )
            )
            pose_lines.append(
                json.dumps(
                    {
                        "image_id": f"img{i}",
                        "bbox": bbox,
                        "score": 0.9,
                        "keypoints": kp.tolist(),
                        "instance_id": iid,
                    }
                )
            )
    dets = root / "dets.jsonl"
    poses = root / "poses.jsonl"
    dets.write_text("\n".join(det_lines) + "\n")
    poses.write_text("\n".join(pose_lines) + "\n")
    gt = root / "gt.json"
    assert run(
        ["pseudo-gt", "--detections", str(dets), "--poses", str(poses), "--out", str(gt)]
    ) == 0
    return root, dets, poses, gt


def test_determinism_byte_identical_reports(fixture_videos, pose_fixture_files, tmp_path):
    """eval-face, eval-video, eval-pose run twice give byte-identical output.

    Each run is a fresh OS process (fresh hash seed), so any hash-order
    dependence in report assembly would show up as differing bytes.
    """
    import subprocess

    origs = [str(o) for o, _ in fixture_videos]
    anons = [str(a) for _, a in fixture_videos]
    root, dets, poses, gt = pose_fixture_files

    commands = {
        "eval-face": ["eval-face", "--original", *origs, "--anonymized", *anons],
        "eval-video": ["eval-video", "--original", *origs, "--anonymized", *anons],
        "eval-pose": ["eval-pose", "--gt", str(gt), "--predictions", str(poses)],
    }
    for name, argv in commands.items():
        blobs = []
        for attempt in (1, 2):
            out = tmp_path / f"{name}_{attempt}.json"
            proc = subprocess.run(
                [sys.executable, "-m", "anoneval", *argv, "--out", str(out)],
                capture_output=True,
                text=True,
            )
            assert proc.returncode == 0, proc.stderr
            blobs.append(out.read_bytes())
        assert blobs[0] == blobs[1], f"{name} output differs between runs"
        assert blobs[0]
    _report("determinism (byte-identical eval-face/eval-video/eval-pose)")


def test_orchestrator_contract(tmp_path):
    """Stub backends: 3-stage success; frames 4-5 faceless -> obscure {4, 5}."""
    from conftest import record_obj, stream_header, stream_text

    lms = synthetic_landmarks(cx=300, cy=220, size=80)
    records = []
    for i in range(10):
        if i in (4, 5):
            records.append({"video_id": "vid", "frame_idx": i, "faces": []})
        else:
            records.append(
                record_obj(frame_idx=i, bbox=(200, 140, 200, 160), landmarks=lms.tolist())
            )
    stream_path = tmp_path / "s.jsonl"
    stream_path.write_text(
        stream_text(stream_header("vid", "original", 640, 480, 10), records)
    )

    stub = tmp_path / "stub.py"
    stub.write_text("import shutil, sys\nshutil.copyfile(sys.argv[1], sys.argv[2])\n")
    (tmp_path / "in.mp4").write_bytes(b"video")
    config = {
        "input_path": str(tmp_path / "in.mp4"),
        "output_path": str(tmp_path / "out.mp4"),
        "workdir": str(tmp_path / "work"),
        "inpaint_backend_cmd": f"{sys.executable} {stub} {{input}} {{output}} --mask {{mask}}",
        "faceswap_backend_cmd": f"{sys.executable} {stub} {{identity}} {{output}} --input {{input}}",
    }
    config_path = tmp_path / "pipeline.json"
    config_path.write_text(json.dumps(config))

    plan_out = tmp_path / "plan.json"
    assert run(["plan", "--pipeline", str(config_path), "--stream", str(stream_path),
                "--out", str(plan_out)]) == 0
    plan = json.loads(plan_out.read_text())
    assert plan["obscure_frames"] == [4, 5]

    record_out = tmp_path / "record.json"
    assert run(["execute", "--pipeline", str(config_path), "--stream", str(stream_path),
                "--out", str(record_out)]) == 0
    record = json.loads(record_out.read_text())
    assert record["status"] == "ok"
    assert [s["name"] for s in record["stages"]] == ["mask", "inpaint", "faceswap"]
    assert all(s["exit_code"] == 0 for s in record["stages"])
    assert record["obscure_frames"] == [4, 5]
    _report("orchestrator contract (3-stage record, obscure_frames == {4, 5})")
