"""Plan and execute the anonymization pipeline against stub backends.

Writes a face stream with two faceless frames, plans the mask/inpaint/
faceswap stages, runs them with copy-only stub scripts and prints the
execution record.  The same contract drives real inpainting and face-swap
tools through the {input}/{mask}/{identity}/{output} placeholders.
"""

import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from anoneval.orchestrator import PipelineConfig, execute_plan, plan_pipeline
from anoneval.streams import parse_face_stream

STUB = "import shutil, sys\nshutil.copyfile(sys.argv[1], sys.argv[2])\n"


def face_line(frame, landmarks):
    return json.dumps(
        {
            "video_id": "clip",
            "frame_idx": frame,
            "bbox": [200.0, 140.0, 200.0, 160.0],
            "det_score": 0.95,
            "landmarks": landmarks,
        }
    )


def main():
    root = Path(tempfile.mkdtemp(prefix="pipeline_demo_"))
    t = np.linspace(0, 2 * np.pi, 98, endpoint=False)
    landmarks = np.stack([300 + 90 * np.cos(t), 220 + 70 * np.sin(t)], axis=1).tolist()

    lines = [json.dumps({"video_id": "clip", "role": "original", "width": 640,
                         "height": 480, "frame_count": 10})]
    for i in range(10):
        if i in (4, 5):  # detector found nothing here
            lines.append(json.dumps({"video_id": "clip", "frame_idx": i, "faces": []}))
        else:
            lines.append(face_line(i, landmarks))
    stream_path = root / "clip.jsonl"
    stream_path.write_text("\n".join(lines) + "\n")

    stub = root / "stub.py"
    stub.write_text(STUB)
    (root / "clip.mp4").write_bytes(b"pretend this is a video")

    config = PipelineConfig(
        input_path=str(root / "clip.mp4"),
        output_path=str(root / "clip_anonymized.mp4"),
        workdir=str(root / "work"),
        inpaint_backend_cmd=f"{sys.executable} {stub} {{input}} {{output}} --mask {{mask}} --frame {{frame}}",
        faceswap_backend_cmd=f"{sys.executable} {stub} {{identity}} {{output}} --input {{input}}",
    )

    stream = parse_face_stream(stream_path.read_bytes())
    plan = plan_pipeline(config, stream)
    print(f"reference frame: {plan.reference_frame_idx}")
    print(f"frames to obscure (no detection): {plan.obscure_frames}")
    for stage in plan.stages:
        kind = "internal" if stage.command is None else "subprocess"
        print(f"  stage {stage.name:<9} [{kind}] -> {stage.output}")

    record = execute_plan(plan)
    print(f"\nstatus: {record['status']}")
    for entry in record["stages"]:
        print(f"  {entry['name']:<9} exit={entry['exit_code']} "
              f"duration={entry['duration_s'] * 1000:.1f}ms")
    print(f"\nfull record and outputs under {root}")


if __name__ == "__main__":
    main()
