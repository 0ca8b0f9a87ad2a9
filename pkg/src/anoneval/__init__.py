"""Evaluation engine and pipeline toolkit for face anonymization in video."""

from . import (
    face_metrics,
    geometry,
    orchestrator,
    pose_eval,
    report,
    streams,
    video_metrics,
)
from .errors import BackendError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "ValidationError",
    "face_metrics",
    "geometry",
    "orchestrator",
    "pose_eval",
    "report",
    "streams",
    "video_metrics",
]
