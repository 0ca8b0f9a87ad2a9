"""Pipeline planning and staged execution around external anonymization tools.

The engine never touches pixels: it selects the reference frame, generates
the face mask from that frame's landmarks, and drives two external backends
(inpainting, then face swapping) through file-path command templates with
``{input}``, ``{mask}``, ``{identity}``, ``{output}`` placeholders (plus
optional ``{prompt}`` and ``{frame}``).  Frames with no detected face are
listed for the configured obscuring policy.
"""

from __future__ import annotations

import json
import shlex
import string
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .errors import BackendError, TemplateError, UnanonymizableVideoError, ValidationError
from .streams import FaceRecord, VideoFaceStream

DEFAULT_PROMPT = "a face of a baby"

OBSCURE_POLICIES = ("black_frame", "skip")

STAGE_MASK = "mask"
STAGE_INPAINT = "inpaint"
STAGE_FACESWAP = "faceswap"

# {output} is stage-local: the inpaint backend writes the identity image,
# the faceswap backend writes the anonymized video.
_PLACEHOLDERS = {
    STAGE_INPAINT: {
        "required": {"input", "mask", "output"},
        "optional": {"prompt", "frame"},
    },
    STAGE_FACESWAP: {
        "required": {"input", "identity", "output"},
        "optional": {"prompt", "frame"},
    },
}


@dataclass
class PipelineConfig:
    input_path: str
    output_path: str
    workdir: str
    inpaint_backend_cmd: str
    faceswap_backend_cmd: str
    prompt: str = DEFAULT_PROMPT
    conf_thr: float = 0.0  # minimum det_score for a face to count as detected
    sample_count: int = 1
    obscure_policy: str = "black_frame"
    backend_params: dict = field(default_factory=dict)  # passed through, not interpreted

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValidationError("sample_count must be >= 1")
        if self.obscure_policy not in OBSCURE_POLICIES:
            raise ValidationError(
                f"obscure_policy must be one of {sorted(OBSCURE_POLICIES)}"
            )

    @classmethod
    def from_json(cls, data) -> "PipelineConfig":
        text = data.decode("utf-8") if isinstance(data, bytes) else data
        obj = json.loads(text)
        required = (
            "input_path",
            "output_path",
            "workdir",
            "inpaint_backend_cmd",
            "faceswap_backend_cmd",
        )
        for key in required:
            if key not in obj:
                raise ValidationError(f"pipeline config missing required field '{key}'")
        known = set(required) | {
            "prompt",
            "conf_thr",
            "sample_count",
            "obscure_policy",
            "backend_params",
        }
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown pipeline config fields: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class Stage:
    name: str
    command: list[str] | None  # None for the internal mask stage
    output: str


@dataclass
class StagePlan:
    video_id: str
    reference_frame_idx: int
    mask_path: str
    stages: list[Stage]
    obscure_frames: list[int]
    obscure_policy: str
    width: int
    height: int
    reference_landmarks: list[list[float]]
    prompt: str
    backend_params: dict = field(default_factory=dict)

    def to_json(self) -> bytes:
        doc = {
            "video_id": self.video_id,
            "reference_frame_idx": self.reference_frame_idx,
            "mask_path": self.mask_path,
            "stages": [
                {"name": s.name, "command": s.command, "output": s.output}
                for s in self.stages
            ],
            "obscure_frames": self.obscure_frames,
            "obscure_policy": self.obscure_policy,
            "width": self.width,
            "height": self.height,
            "reference_landmarks": self.reference_landmarks,
            "prompt": self.prompt,
            "backend_params": self.backend_params,
        }
        return (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode("utf-8")

    @classmethod
    def from_json(cls, data) -> "StagePlan":
        text = data.decode("utf-8") if isinstance(data, bytes) else data
        obj = json.loads(text)
        stages = [Stage(s["name"], s["command"], s["output"]) for s in obj.pop("stages")]
        return cls(stages=stages, **obj)


def detected_faces(faces: list[FaceRecord], conf_thr: float) -> list[FaceRecord]:
    return [f for f in faces if f.det_score >= conf_thr]


def select_reference_frame(stream: VideoFaceStream, conf_thr: float = 0.0) -> int:
    """Smallest frame index with at least one detected face."""
    for frame_idx, faces in stream.frames:
        if detected_faces(faces, conf_thr):
            return frame_idx
    raise UnanonymizableVideoError(
        f"video '{stream.video_id}' has no frame with a detected face"
    )


def select_reference_face(
    stream: VideoFaceStream, conf_thr: float = 0.0
) -> tuple[int, FaceRecord]:
    """Reference frame index plus the face designated for mask generation.

    With several faces in the reference frame, the largest bbox area wins.
    """
    frame_idx = select_reference_frame(stream, conf_thr)
    faces = detected_faces(stream.faces_at(frame_idx), conf_thr)
    return frame_idx, max(faces, key=lambda f: f.bbox_area())


def sample_frames_uniform(frame_count: int, sample_count: int) -> list[int]:
    """Uniformly spaced frame indices, endpoints included, deduplicated.

    Index k maps to round(k * (frame_count - 1) / (sample_count - 1)) with
    half-up rounding; a single sample takes frame 0.
    """
    if sample_count < 1:
        raise ValidationError("sample_count must be >= 1")
    if sample_count > frame_count:
        raise ValidationError(
            f"sample_count {sample_count} exceeds frame_count {frame_count}"
        )
    if sample_count == 1:
        return [0]
    step = (frame_count - 1) / (sample_count - 1)
    indices = [int(np.floor(k * step + 0.5)) for k in range(sample_count)]
    out = [indices[0]]
    for idx in indices[1:]:
        if idx != out[-1]:
            out.append(idx)
    return out


def _resolve_template(template: str, stage: str, values: dict[str, str]) -> list[str]:
    """Split a command template and substitute placeholders token-wise."""
    spec = _PLACEHOLDERS[stage]
    allowed = spec["required"] | spec["optional"]
    seen = set()
    formatter = string.Formatter()
    tokens = shlex.split(template)
    resolved = []
    for token in tokens:
        for _, name, _, _ in formatter.parse(token):
            if name is None:
                continue
            if name not in allowed:
                raise TemplateError(
                    f"{stage} command template uses unknown placeholder "
                    f"'{{{name}}}'",
                    placeholder=name,
                )
            seen.add(name)
        resolved.append(token.format(**values))
    missing = spec["required"] - seen
    if missing:
        name = sorted(missing)[0]
        raise TemplateError(
            f"{stage} command template is missing placeholder '{{{name}}}'",
            placeholder=name,
        )
    return resolved


def plan_pipeline(config: PipelineConfig, stream: VideoFaceStream) -> StagePlan:
    """Build the three-stage anonymization plan for one video.

    Stages: generate the face mask at the reference frame, invoke the
    inpainting backend to produce the new-identity image, invoke the
    face-swap backend to produce the anonymized video.
    """
    frame_idx, face = select_reference_face(stream, config.conf_thr)
    if face.landmarks is None:
        raise ValidationError(
            f"reference face at frame {frame_idx} carries no landmarks; "
            "cannot generate the mask"
        )

    workdir = Path(config.workdir)
    mask_path = str(workdir / f"{stream.video_id}_mask.pgm")
    identity_path = str(workdir / f"{stream.video_id}_identity.png")

    common = {"input": config.input_path, "prompt": config.prompt, "frame": str(frame_idx)}
    inpaint_cmd = _resolve_template(
        config.inpaint_backend_cmd,
        STAGE_INPAINT,
        {**common, "mask": mask_path, "output": identity_path},
    )
    faceswap_cmd = _resolve_template(
        config.faceswap_backend_cmd,
        STAGE_FACESWAP,
        {**common, "identity": identity_path, "output": config.output_path},
    )

    frames_with_detection = {
        idx
        for idx, faces in stream.frames
        if detected_faces(faces, config.conf_thr)
    }
    obscure = [i for i in range(stream.frame_count) if i not in frames_with_detection]

    return StagePlan(
        video_id=stream.video_id,
        reference_frame_idx=frame_idx,
        mask_path=mask_path,
        stages=[
            Stage(STAGE_MASK, None, mask_path),
            Stage(STAGE_INPAINT, inpaint_cmd, identity_path),
            Stage(STAGE_FACESWAP, faceswap_cmd, config.output_path),
        ],
        obscure_frames=obscure,
        obscure_policy=config.obscure_policy,
        width=stream.width,
        height=stream.height,
        reference_landmarks=[[float(x), float(y)] for x, y in face.landmarks],
        prompt=config.prompt,
        backend_params=dict(config.backend_params),
    )


def _run_mask_stage(plan: StagePlan) -> None:
    mask = geometry.landmark_mask(
        np.asarray(plan.reference_landmarks, dtype=np.float64),
        plan.width,
        plan.height,
    )
    path = Path(plan.mask_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(geometry.write_mask_pgm(mask))


def execute_plan(plan: StagePlan) -> dict:
    """Run the planned stages in order, capturing exit codes and durations.

    Aborts on the first nonzero exit or missing output file, raising
    BackendError with the partial execution record attached.
    """
    record = {
        "video_id": plan.video_id,
        "reference_frame_idx": plan.reference_frame_idx,
        "obscure_frames": plan.obscure_frames,
        "obscure_policy": plan.obscure_policy,
        "backend_params": plan.backend_params,
        "stages": [],
        "status": "ok",
    }
    for stage in plan.stages:
        entry = {
            "name": stage.name,
            "command": stage.command,
            "output": stage.output,
            "exit_code": None,
            "duration_s": None,
            "stderr": "",
        }
        record["stages"].append(entry)
        start = time.perf_counter()
        if stage.command is None:
            _run_mask_stage(plan)
            entry["exit_code"] = 0
        else:
            proc = subprocess.run(stage.command, capture_output=True, text=True)
            entry["exit_code"] = proc.returncode
            entry["stderr"] = proc.stderr[-4000:]
            if proc.returncode != 0:
                entry["duration_s"] = time.perf_counter() - start
                record["status"] = f"failed at stage '{stage.name}'"
                raise BackendError(
                    f"stage '{stage.name}' exited with code {proc.returncode}",
                    stage=stage.name,
                    record=record,
                )
        entry["duration_s"] = time.perf_counter() - start
        if not Path(stage.output).exists():
            record["status"] = f"failed at stage '{stage.name}'"
            raise BackendError(
                f"stage '{stage.name}' produced no output file at "
                f"'{stage.output}'",
                stage=stage.name,
                record=record,
            )
    return record
