import itertools
import json

import numpy as np
import pytest

from anoneval.errors import (
    FrameOrderError,
    PairingError,
    RoleMismatchError,
    SchemaError,
)
from anoneval.streams import (
    DESCRIPTOR_DIM,
    bbox_iou,
    pair_streams,
    parse_face_stream,
    serialize_face_stream,
)

from conftest import (
    record_obj,
    stream_header,
    stream_text,
    synthetic_landmarks,
    unit_descriptor,
)


def test_parse_single_face_with_landmarks():
    lms = synthetic_landmarks()
    text = stream_text(
        stream_header(frame_count=1),
        [record_obj(frame_idx=0, landmarks=lms.tolist())],
    )
    stream = parse_face_stream(text, "original")
    assert stream.video_id == "vid"
    assert len(stream.frames) == 1
    frame_idx, faces = stream.frames[0]
    assert frame_idx == 0
    assert len(faces) == 1
    assert faces[0].landmarks.shape == (98, 2)


def test_parse_97_landmarks_is_cardinality_error_with_line():
    lms = synthetic_landmarks().tolist()[:97]
    text = stream_text(stream_header(frame_count=1), [record_obj(landmarks=lms)])
    with pytest.raises(SchemaError, match="landmark cardinality") as exc:
        parse_face_stream(text)
    assert exc.value.line == 2


def test_descriptor_renormalized_on_ingest(rng):
    v = 2.0 * unit_descriptor(rng)
    text = stream_text(
        stream_header(frame_count=1), [record_obj(descriptor=v.tolist())]
    )
    stream = parse_face_stream(text)
    stored = stream.frames[0][1][0].descriptor
    assert abs(np.linalg.norm(stored) - 1.0) < 1e-6
    np.testing.assert_allclose(stored, v / 2.0, atol=1e-12)


def test_gaze_clamped_on_ingest():
    text = stream_text(
        stream_header(frame_count=1), [record_obj(gaze=[1.5, -2.0])]
    )
    face = parse_face_stream(text).frames[0][1][0]
    assert face.gaze == (1.0, -1.0)


def test_wrong_descriptor_dim_rejected():
    text = stream_text(
        stream_header(frame_count=1), [record_obj(descriptor=[1.0, 0.0])]
    )
    with pytest.raises(SchemaError, match="descriptor cardinality"):
        parse_face_stream(text)


def test_missing_required_field_reports_line():
    obj = record_obj()
    del obj["bbox"]
    text = stream_text(stream_header(frame_count=2), [record_obj(), obj])
    with pytest.raises(SchemaError, match="missing required field 'bbox'") as exc:
        parse_face_stream(text)
    assert exc.value.line == 3


def test_non_monotone_frame_idx_rejected():
    text = stream_text(
        stream_header(frame_count=5),
        [record_obj(frame_idx=3), record_obj(frame_idx=1)],
    )
    with pytest.raises(FrameOrderError, match="non-monotone"):
        parse_face_stream(text)


def test_role_mismatch_is_distinct_error():
    text = stream_text(stream_header(role="anonymized", frame_count=1), [record_obj()])
    with pytest.raises(RoleMismatchError):
        parse_face_stream(text, "original")


def test_attribute_vocabulary_enforced():
    text = stream_text(
        stream_header(frame_count=1),
        [record_obj(attributes={"emotion": "bored"})],
    )
    with pytest.raises(SchemaError, match="not in vocabulary"):
        parse_face_stream(text)


def test_head_rot_must_be_orthonormal():
    bad = np.eye(3)
    bad[0, 0] = 1.2
    text = stream_text(
        stream_header(frame_count=1), [record_obj(head_rot=bad.tolist())]
    )
    with pytest.raises(SchemaError, match="orthonormal"):
        parse_face_stream(text)


def test_empty_frame_marker_roundtrip():
    text = stream_text(
        stream_header(frame_count=3),
        [
            record_obj(frame_idx=0),
            {"video_id": "vid", "frame_idx": 1, "faces": []},
            record_obj(frame_idx=2),
        ],
    )
    stream = parse_face_stream(text)
    assert [idx for idx, _ in stream.frames] == [0, 1, 2]
    assert stream.frames[1][1] == []


def test_roundtrip_parse_serialize_parse(rng):
    lms = synthetic_landmarks()
    records = [
        record_obj(
            frame_idx=i,
            descriptor=unit_descriptor(rng).tolist(),
            landmarks=lms.tolist(),
            gaze=[0.25, -0.5],
            attributes={"gender": "female", "race": "White", "emotion": "neutral"},
        )
        for i in range(4)
    ]
    stream1 = parse_face_stream(stream_text(stream_header(frame_count=4), records))
    blob = serialize_face_stream(stream1)
    stream2 = parse_face_stream(blob)
    assert serialize_face_stream(stream2) == blob
    assert stream2.video_id == stream1.video_id
    for (i1, faces1), (i2, faces2) in zip(stream1.frames, stream2.frames):
        assert i1 == i2
        for f1, f2 in zip(faces1, faces2):
            assert f1.bbox == f2.bbox
            np.testing.assert_array_equal(f1.descriptor, f2.descriptor)
            np.testing.assert_array_equal(f1.landmarks, f2.landmarks)
            assert f1.attributes == f2.attributes


# ---------------------------------------------------------------------------
# Pairing


def _stream_with_boxes(role, boxes_per_frame, frame_count=None, video_id="vid"):
    records = []
    for i, boxes in enumerate(boxes_per_frame):
        if not boxes:
            records.append({"video_id": video_id, "frame_idx": i, "faces": []})
        for b in boxes:
            records.append(record_obj(video_id=video_id, frame_idx=i, bbox=b))
    fc = frame_count or len(boxes_per_frame)
    return parse_face_stream(
        stream_text(stream_header(video_id, role, frame_count=fc), records)
    )


def test_pairing_identity_case():
    boxes = [[(10, 10, 50, 50)]] * 4
    orig = _stream_with_boxes("original", boxes)
    anon = _stream_with_boxes("anonymized", boxes)
    paired = pair_streams(orig, anon)
    assert len(paired.pairs) == 4
    assert paired.skipped_frames == []


def test_pairing_missing_anon_face():
    orig = _stream_with_boxes("original", [[(0, 0, 10, 10)]] * 4)
    anon = _stream_with_boxes(
        "anonymized", [[(0, 0, 10, 10)]] * 3 + [[]]
    )
    paired = pair_streams(orig, anon)
    assert (3, "no_face_anonymized") in paired.skipped_frames
    assert len(paired.pairs) == 3


def test_pairing_two_face_assignment():
    # A<->A' IoU 0.8, B<->B' IoU 0.7, cross IoU well below threshold.
    a, a2 = (0, 0, 10, 10), (0, 1.1111111, 10, 10)  # IoU ~0.8
    b, b2 = (100, 0, 10, 10), (100, 1.7647, 10, 10)  # IoU ~0.7
    assert abs(bbox_iou(a, a2) - 0.8) < 1e-6
    assert abs(bbox_iou(b, b2) - 0.7) < 1e-4
    orig = _stream_with_boxes("original", [[a, b]])
    anon = _stream_with_boxes("anonymized", [[a2, b2]])
    paired = pair_streams(orig, anon, iou_thr=0.3)
    got = {(o.bbox, an.bbox) for _, o, an in paired.pairs}
    assert got == {(a, a2), (b, b2)}


def test_pairing_video_id_mismatch():
    orig = _stream_with_boxes("original", [[(0, 0, 1, 1)]], video_id="a")
    anon = _stream_with_boxes("anonymized", [[(0, 0, 1, 1)]], video_id="b")
    with pytest.raises(PairingError, match="'a' vs 'b'"):
        pair_streams(orig, anon)


def test_pair_count_bounded_by_min_faces(rng):
    for _ in range(20):
        n_o, n_a = rng.integers(1, 4), rng.integers(1, 4)
        orig_boxes = [
            tuple(rng.uniform(0, 50, size=2)) + tuple(rng.uniform(5, 30, size=2))
            for _ in range(n_o)
        ]
        anon_boxes = [
            tuple(rng.uniform(0, 50, size=2)) + tuple(rng.uniform(5, 30, size=2))
            for _ in range(n_a)
        ]
        orig = _stream_with_boxes("original", [orig_boxes])
        anon = _stream_with_boxes("anonymized", [anon_boxes])
        paired = pair_streams(orig, anon, iou_thr=0.1)
        assert len(paired.pairs) <= min(n_o, n_a)


def _best_matching_value(matrix, thr):
    """Exhaustive maximum-total-IoU matching over pairs above threshold."""
    n_o, n_a = matrix.shape
    best = 0.0
    best_pairs = []
    indices = list(range(n_a))
    for k in range(0, min(n_o, n_a) + 1):
        for rows in itertools.combinations(range(n_o), k):
            for cols in itertools.permutations(indices, k):
                if any(matrix[r, c] < thr for r, c in zip(rows, cols)):
                    continue
                total = sum(matrix[r, c] for r, c in zip(rows, cols))
                if total > best:
                    best = total
                    best_pairs = sorted(zip(rows, cols))
    return best, best_pairs


def test_greedy_matches_optimal_when_totals_agree(rng):
    thr = 0.1
    agreements = 0
    for _ in range(40):
        n_o, n_a = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        orig_boxes = [
            tuple(rng.uniform(0, 40, size=2)) + tuple(rng.uniform(10, 30, size=2))
            for _ in range(n_o)
        ]
        anon_boxes = [
            tuple(rng.uniform(0, 40, size=2)) + tuple(rng.uniform(10, 30, size=2))
            for _ in range(n_a)
        ]
        matrix = np.array(
            [[bbox_iou(o, a) for a in anon_boxes] for o in orig_boxes]
        )
        orig = _stream_with_boxes("original", [orig_boxes])
        anon = _stream_with_boxes("anonymized", [anon_boxes])
        paired = pair_streams(orig, anon, iou_thr=thr)
        greedy_pairs = sorted(
            (orig_boxes.index(o.bbox), anon_boxes.index(a.bbox))
            for _, o, a in paired.pairs
        )
        greedy_total = sum(matrix[r, c] for r, c in greedy_pairs)
        opt_total, opt_pairs = _best_matching_value(matrix, thr)
        assert greedy_total <= opt_total + 1e-12
        if abs(greedy_total - opt_total) < 1e-12:
            agreements += 1
            assert greedy_pairs == opt_pairs
    assert agreements > 0


def test_pairing_threshold_bounds_rejected():
    boxes = [[(0, 0, 10, 10)]]
    orig = _stream_with_boxes("original", boxes)
    anon = _stream_with_boxes("anonymized", boxes)
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(PairingError, match="iou_thr"):
            pair_streams(orig, anon, iou_thr=bad)


def test_pairing_partitions_frames_with_data(rng):
    # Paired and skipped frames together cover exactly the frames where
    # either stream has an entry, with no overlap.
    for _ in range(10):
        frame_count = 12
        orig_boxes = []
        anon_boxes = []
        for i in range(frame_count):
            orig_boxes.append(
                [tuple(rng.uniform(0, 40, 2)) + tuple(rng.uniform(10, 30, 2))]
                if rng.random() < 0.7 else []
            )
            anon_boxes.append(
                [tuple(rng.uniform(0, 40, 2)) + tuple(rng.uniform(10, 30, 2))]
                if rng.random() < 0.7 else []
            )
        orig = _stream_with_boxes("original", orig_boxes)
        anon = _stream_with_boxes("anonymized", anon_boxes)
        paired = pair_streams(orig, anon, iou_thr=0.1)
        paired_frames = {idx for idx, _, _ in paired.pairs}
        skipped_frames = {idx for idx, _ in paired.skipped_frames}
        with_data = {idx for idx, _ in orig.frames} | {idx for idx, _ in anon.frames}
        assert paired_frames | skipped_frames == with_data
        assert paired_frames & skipped_frames == set()


def test_empty_frame_marker_survives_serialization():
    text = stream_text(
        stream_header(frame_count=3),
        [
            record_obj(frame_idx=0),
            {"video_id": "vid", "frame_idx": 1, "faces": []},
            record_obj(frame_idx=2),
        ],
    )
    stream = parse_face_stream(text)
    again = parse_face_stream(serialize_face_stream(stream))
    assert [idx for idx, _ in again.frames] == [0, 1, 2]
    assert again.frames[1][1] == []
