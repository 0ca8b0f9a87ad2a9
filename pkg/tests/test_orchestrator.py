import json
import os
import stat
import sys

import numpy as np
import pytest

from anoneval.errors import (
    BackendError,
    TemplateError,
    UnanonymizableVideoError,
    ValidationError,
)
from anoneval.geometry import read_mask_pgm
from anoneval.orchestrator import (
    PipelineConfig,
    StagePlan,
    execute_plan,
    plan_pipeline,
    sample_frames_uniform,
    select_reference_face,
    select_reference_frame,
)
from anoneval.streams import parse_face_stream

from conftest import record_obj, stream_header, stream_text, synthetic_landmarks


def build_stream(face_frames, frame_count=10, with_landmarks=True, video_id="vid"):
    records = []
    lms = synthetic_landmarks(cx=300, cy=220, size=80)
    for i in range(frame_count):
        if i in face_frames:
            extra = {"landmarks": lms.tolist()} if with_landmarks else {}
            records.append(
                record_obj(video_id=video_id, frame_idx=i, bbox=(200, 140, 200, 160), **extra)
            )
        else:
            records.append({"video_id": video_id, "frame_idx": i, "faces": []})
    return parse_face_stream(
        stream_text(stream_header(video_id, "original", 640, 480, frame_count), records)
    )


COPY_STUB = """\
import shutil, sys
shutil.copyfile(sys.argv[1], sys.argv[2])
"""

FAIL_STUB = """\
import sys
print("backend exploded", file=sys.stderr)
sys.exit(1)
"""

NO_OUTPUT_STUB = """\
import sys
"""


def write_stub(tmp_path, name, body):
    path = tmp_path / name
    path.write_text(body)
    return path


def make_config(tmp_path, inpaint_cmd=None, faceswap_cmd=None, **kwargs):
    copy_stub = write_stub(tmp_path, "copy_stub.py", COPY_STUB)
    workdir = tmp_path / "work"
    workdir.mkdir(exist_ok=True)
    input_path = tmp_path / "input.mp4"
    input_path.write_bytes(b"fake video bytes")
    defaults = dict(
        input_path=str(input_path),
        output_path=str(tmp_path / "anonymized.mp4"),
        workdir=str(workdir),
        inpaint_backend_cmd=inpaint_cmd
        or f"{sys.executable} {copy_stub} {{input}} {{output}} --mask {{mask}}",
        faceswap_backend_cmd=faceswap_cmd
        or f"{sys.executable} {copy_stub} {{identity}} {{output}} --input {{input}}",
    )
    defaults.update(kwargs)
    return PipelineConfig(**defaults)


# ---------------------------------------------------------------------------
# Reference frame selection


def test_reference_frame_from_zero():
    stream = build_stream(face_frames=set(range(10)))
    assert select_reference_frame(stream) == 0


def test_reference_frame_first_detection_at_7():
    stream = build_stream(face_frames=set(range(7, 10)))
    assert select_reference_frame(stream) == 7


def test_reference_frame_no_faces_anywhere():
    stream = build_stream(face_frames=set())
    with pytest.raises(UnanonymizableVideoError):
        select_reference_frame(stream)


def test_reference_face_largest_bbox():
    records = [
        record_obj(frame_idx=0, bbox=(0, 0, 10, 10)),
        record_obj(frame_idx=0, bbox=(20, 20, 50, 50)),
    ]
    stream = parse_face_stream(
        stream_text(stream_header(frame_count=1), records)
    )
    _, face = select_reference_face(stream)
    assert face.bbox == (20.0, 20.0, 50.0, 50.0)


# ---------------------------------------------------------------------------
# Uniform sampling


def test_sampling_full_coverage():
    assert sample_frames_uniform(10, 10) == list(range(10))


def test_sampling_single():
    assert sample_frames_uniform(100, 1) == [0]


def test_sampling_formula():
    assert sample_frames_uniform(101, 5) == [0, 25, 50, 75, 100]


def test_sampling_includes_endpoints():
    for frame_count in (2, 17, 100, 997):
        for sample_count in (2, 3, 7):
            if sample_count > frame_count:
                continue
            out = sample_frames_uniform(frame_count, sample_count)
            assert out[0] == 0
            assert out[-1] == frame_count - 1
            assert all(a < b for a, b in zip(out, out[1:]))


def test_sampling_too_many_rejected():
    with pytest.raises(ValidationError):
        sample_frames_uniform(5, 6)


# ---------------------------------------------------------------------------
# Planning


def test_plan_all_frames_have_faces(tmp_path):
    config = make_config(tmp_path)
    plan = plan_pipeline(config, build_stream(set(range(10))))
    assert plan.obscure_frames == []
    assert [s.name for s in plan.stages] == ["mask", "inpaint", "faceswap"]


def test_plan_missing_faces_listed(tmp_path):
    config = make_config(tmp_path)
    plan = plan_pipeline(config, build_stream(set(range(10)) - {4, 5}))
    assert plan.obscure_frames == [4, 5]


def test_plan_covers_frames_exactly_once(tmp_path):
    config = make_config(tmp_path)
    face_frames = {0, 2, 3, 7, 9}
    stream = build_stream(face_frames)
    plan = plan_pipeline(config, stream)
    assert sorted(set(plan.obscure_frames) | face_frames) == list(range(10))
    assert set(plan.obscure_frames) & face_frames == set()


def test_plan_missing_identity_placeholder(tmp_path):
    config = make_config(
        tmp_path,
        faceswap_cmd=f"{sys.executable} stub.py {{input}} {{output}}",
    )
    with pytest.raises(TemplateError, match="identity"):
        plan_pipeline(config, build_stream(set(range(10))))


def test_plan_unknown_placeholder(tmp_path):
    config = make_config(
        tmp_path,
        inpaint_cmd="tool {input} {mask} {output} {banana}",
    )
    with pytest.raises(TemplateError, match="banana"):
        plan_pipeline(config, build_stream(set(range(10))))


def test_plan_requires_landmarks(tmp_path):
    config = make_config(tmp_path)
    stream = build_stream(set(range(10)), with_landmarks=False)
    with pytest.raises(ValidationError, match="landmarks"):
        plan_pipeline(config, stream)


def test_plan_roundtrip_json(tmp_path):
    config = make_config(tmp_path)
    plan = plan_pipeline(config, build_stream(set(range(10))))
    back = StagePlan.from_json(plan.to_json())
    assert back.to_json() == plan.to_json()
    assert back.reference_frame_idx == plan.reference_frame_idx


def test_plan_deterministic(tmp_path):
    config = make_config(tmp_path)
    stream = build_stream(set(range(10)))
    assert plan_pipeline(config, stream).to_json() == plan_pipeline(config, stream).to_json()


# ---------------------------------------------------------------------------
# Execution


def test_execute_three_stage_success(tmp_path):
    config = make_config(tmp_path)
    plan = plan_pipeline(config, build_stream(set(range(10))))
    record = execute_plan(plan)
    assert record["status"] == "ok"
    assert [s["name"] for s in record["stages"]] == ["mask", "inpaint", "faceswap"]
    assert all(s["exit_code"] == 0 for s in record["stages"])
    mask = read_mask_pgm((tmp_path / "work" / "vid_mask.pgm").read_bytes())
    assert mask.width == 640 and mask.height == 480
    assert mask.bits.any()
    assert (tmp_path / "anonymized.mp4").read_bytes() == b"fake video bytes"


def test_execute_inpaint_failure_halts(tmp_path):
    fail_stub = write_stub(tmp_path, "fail_stub.py", FAIL_STUB)
    config = make_config(
        tmp_path,
        inpaint_cmd=f"{sys.executable} {fail_stub} {{input}} {{mask}} {{output}}",
    )
    plan = plan_pipeline(config, build_stream(set(range(10))))
    with pytest.raises(BackendError, match="inpaint") as exc:
        execute_plan(plan)
    record = exc.value.record
    assert len(record["stages"]) == 2  # mask succeeded, inpaint failed
    assert "backend exploded" in record["stages"][1]["stderr"]


def test_execute_missing_output_detected(tmp_path):
    silent_stub = write_stub(tmp_path, "silent_stub.py", NO_OUTPUT_STUB)
    config = make_config(
        tmp_path,
        faceswap_cmd=f"{sys.executable} {silent_stub} {{input}} {{identity}} {{output}}",
    )
    plan = plan_pipeline(config, build_stream(set(range(10))))
    with pytest.raises(BackendError, match="no output file") as exc:
        execute_plan(plan)
    assert exc.value.stage == "faceswap"
    assert str(config.output_path) in str(exc.value)


def test_pipeline_config_validation(tmp_path):
    with pytest.raises(ValidationError):
        make_config(tmp_path, sample_count=0)
    with pytest.raises(ValidationError):
        make_config(tmp_path, obscure_policy="paint_flowers")
    with pytest.raises(ValidationError):
        PipelineConfig.from_json(json.dumps({"input_path": "x"}))
