"""Per-video temporal statistics: identity fluctuation and landmark correlation.

Identity variance is the population variance of the angles between per-frame
descriptors and the video's normalized median descriptor.  Landmark
correlation is the mean zero-lag Pearson correlation over the 196 landmark
coordinate channels, computed on the intersection of the frame supports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .streams import VideoFaceStream

DEGENERATE_CHANNEL_VAR = 1e-12


@dataclass(eq=False)
class TrajectorySet:
    """98 x 2 landmark time series over the frames where landmarks exist."""

    frame_indices: np.ndarray  # (T',) int
    coords: np.ndarray  # (T', 98, 2) float

    def __post_init__(self):
        if self.coords.ndim != 3 or self.coords.shape[1:] != (98, 2):
            raise ValidationError("trajectory coords must have shape (T, 98, 2)")
        if self.frame_indices.shape[0] != self.coords.shape[0]:
            raise ValidationError("frame index list and coords length differ")


def descriptor_series(stream: VideoFaceStream) -> list[np.ndarray]:
    """Per-frame descriptors (largest-bbox face), frames without one skipped."""
    series = []
    for _, faces in stream.frames:
        with_desc = [f for f in faces if f.descriptor is not None]
        if with_desc:
            series.append(max(with_desc, key=lambda f: f.bbox_area()).descriptor)
    return series


def trajectory_set(stream: VideoFaceStream) -> TrajectorySet:
    """Landmark trajectories of the largest-bbox face per frame."""
    indices = []
    coords = []
    for frame_idx, faces in stream.frames:
        with_lm = [f for f in faces if f.landmarks is not None]
        if with_lm:
            indices.append(frame_idx)
            coords.append(max(with_lm, key=lambda f: f.bbox_area()).landmarks)
    if not indices:
        return TrajectorySet(
            frame_indices=np.zeros(0, dtype=np.int64),
            coords=np.zeros((0, 98, 2), dtype=np.float64),
        )
    return TrajectorySet(
        frame_indices=np.asarray(indices, dtype=np.int64),
        coords=np.asarray(coords, dtype=np.float64),
    )


def median_descriptor(descriptors) -> np.ndarray:
    """Element-wise median across frames, then L2-normalized."""
    if len(descriptors) == 0:
        raise ValidationError("median of an empty descriptor stream")
    stack = np.asarray(descriptors, dtype=np.float64)
    med = np.median(stack, axis=0)
    norm = float(np.linalg.norm(med))
    if norm < 1e-12:
        raise ValidationError("median descriptor has zero norm")
    return med / norm


def identity_variance(descriptors) -> float:
    """Population variance of arccos(v_t . v_mu) in radians squared."""
    if len(descriptors) == 0:
        raise ValidationError("identity variance of an empty descriptor stream")
    v_mu = median_descriptor(descriptors)
    stack = np.asarray(descriptors, dtype=np.float64)
    # Element-wise product + sum keeps identical frames bit-identical (BLAS
    # matrix-vector kernels round differently per row position).
    dots = np.clip(np.sum(stack * v_mu, axis=1), -1.0, 1.0)
    angles = np.arccos(dots)
    return float(np.var(angles))


def landmark_correlation(
    orig: TrajectorySet, anon: TrajectorySet, center_per_frame: bool = False
) -> tuple[float, int]:
    """Mean zero-lag Pearson correlation over landmark coordinate channels.

    Both trajectory sets are restricted to the intersection of their frame
    supports.  Channels with variance below 1e-12 on either side are skipped;
    the skipped-channel count is returned alongside the mean.  With
    ``center_per_frame`` each frame's landmarks are first centered on their
    centroid, removing rigid translation.
    """
    common, o_pos, a_pos = np.intersect1d(
        orig.frame_indices, anon.frame_indices, return_indices=True
    )
    if common.shape[0] < 2:
        raise ValidationError(
            f"trajectory support intersection has {common.shape[0]} frames, need >= 2"
        )
    xo = orig.coords[o_pos]
    xa = anon.coords[a_pos]
    if center_per_frame:
        xo = xo - xo.mean(axis=1, keepdims=True)
        xa = xa - xa.mean(axis=1, keepdims=True)

    t = xo.shape[0]
    xo = xo.reshape(t, -1)  # (T, 196)
    xa = xa.reshape(t, -1)
    xo_c = xo - xo.mean(axis=0)
    xa_c = xa - xa.mean(axis=0)
    var_o = np.mean(xo_c * xo_c, axis=0)
    var_a = np.mean(xa_c * xa_c, axis=0)
    usable = (var_o >= DEGENERATE_CHANNEL_VAR) & (var_a >= DEGENERATE_CHANNEL_VAR)
    skipped = int(np.sum(~usable))
    if not np.any(usable):
        raise ValidationError("all landmark channels are degenerate")
    cov = np.mean(xo_c[:, usable] * xa_c[:, usable], axis=0)
    corr = cov / np.sqrt(var_o[usable] * var_a[usable])
    corr = np.clip(corr, -1.0, 1.0)
    return float(np.mean(corr)), skipped


def evaluate_video_pair(
    original: VideoFaceStream,
    anonymized: VideoFaceStream,
    center_per_frame: bool = False,
) -> dict[str, float | None]:
    """Temporal statistics for one (original, anonymized) video pair.

    Values are None when the needed inputs are missing (no descriptors, or
    too short a shared landmark support).
    """
    out: dict[str, float | None] = {
        "identity_variance_original": None,
        "identity_variance_anonymized": None,
        "landmark_correlation": None,
        "landmark_channels_skipped": None,
    }
    orig_desc = descriptor_series(original)
    anon_desc = descriptor_series(anonymized)
    if orig_desc:
        out["identity_variance_original"] = identity_variance(orig_desc)
    if anon_desc:
        out["identity_variance_anonymized"] = identity_variance(anon_desc)
    try:
        corr, skipped = landmark_correlation(
            trajectory_set(original), trajectory_set(anonymized), center_per_frame
        )
        out["landmark_correlation"] = corr
        out["landmark_channels_skipped"] = float(skipped)
    except ValidationError:
        pass
    return out
