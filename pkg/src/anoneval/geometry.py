"""Computational geometry: convex face masks and landmark openness ratios.

The face mask is the convex hull of the 98 facial landmarks, rasterized to a
binary grid and stored as a binary PGM (P5) file.  Openness ratios compare
mean top-bottom landmark distances against the left-right extent, which makes
them invariant to translation, rotation and uniform scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, ValidationError

BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class Polygon:
    """Simple polygon, vertices counter-clockwise, as an (n, 2) float array."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise DegenerateGeometryError("polygon needs at least 3 (x, y) vertices")
        object.__setattr__(self, "vertices", v)

    def signed_area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True)
class BinaryMask:
    width: int
    height: int
    bits: np.ndarray  # (height, width) bool, row-major

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.shape != (self.height, self.width):
            raise ValidationError(
                f"mask bits shape {b.shape} does not match "
                f"(height, width)=({self.height}, {self.width})"
            )
        object.__setattr__(self, "bits", b)


@dataclass(frozen=True)
class OpennessSpec:
    """Landmark index groups defining an openness ratio on the 98-point scheme.

    ``top_indices[i]`` pairs with ``bottom_indices[i]``; the left/right pair
    spans the horizontal extent.
    """

    top_indices: tuple[int, ...]
    bottom_indices: tuple[int, ...]
    left_index: int
    right_index: int

    def __post_init__(self):
        idx = (*self.top_indices, *self.bottom_indices, self.left_index, self.right_index)
        if len(self.top_indices) != len(self.bottom_indices):
            raise ValidationError("top and bottom index sets must have the same size")
        if not self.top_indices:
            raise ValidationError("openness spec needs at least one top/bottom pair")
        if any(not (0 <= i <= 97) for i in idx):
            raise ValidationError("openness landmark indices must lie in [0, 97]")


# WFLW 98-point layout convention: eyes at 60-67 / 68-75 (corner, upper arc,
# corner, lower arc), outer mouth at 76-87.  These groups are a documented
# convention of this toolkit, configurable through the engine config.
LEFT_EYE_SPEC = OpennessSpec((61, 62, 63), (67, 66, 65), 60, 64)
RIGHT_EYE_SPEC = OpennessSpec((69, 70, 71), (75, 74, 73), 68, 72)
MOUTH_SPEC = OpennessSpec((77, 78, 79, 80, 81), (87, 86, 85, 84, 83), 76, 82)

OPENNESS_PRESETS = {
    "left_eye": LEFT_EYE_SPEC,
    "right_eye": RIGHT_EYE_SPEC,
    "mouth": MOUTH_SPEC,
}


def convex_hull(points) -> Polygon:
    """Convex hull by monotone chain, counter-clockwise, collinear-free.

    Output vertices are a subset of the input points and start at the
    lexicographically smallest vertex, which keeps downstream serialization
    byte-stable.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DegenerateGeometryError("expected an (n, 2) array of points")
    if pts.shape[0] < 3:
        raise DegenerateGeometryError("convex hull needs at least 3 points")

    order = np.lexsort((pts[:, 1], pts[:, 0]))
    sorted_pts = [tuple(p) for p in pts[order]]
    # Drop exact duplicates (keeps the hull strictly convex).
    uniq = [sorted_pts[0]]
    for p in sorted_pts[1:]:
        if p != uniq[-1]:
            uniq.append(p)
    if len(uniq) < 3:
        raise DegenerateGeometryError("fewer than 3 distinct points")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[tuple[float, float]] = []
    for p in uniq:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(uniq):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)

    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateGeometryError("points are collinear, hull is degenerate")
    return Polygon(np.asarray(hull, dtype=np.float64))


def rasterize_mask(poly: Polygon, width: int, height: int) -> BinaryMask:
    """Rasterize a polygon: pixel (i, j) is set iff its center lies inside.

    The pixel center is (j + 0.5, i + 0.5).  Inclusion uses the even-odd rule
    plus a boundary-inclusive test with tolerance 1e-9, so centers sitting
    exactly on an edge are set.
    """
    if width <= 0 or height <= 0:
        raise ValidationError("mask dimensions must be positive")
    verts = poly.vertices
    n = verts.shape[0]

    # Pixels whose centers fall outside the polygon bounding box (padded by
    # the boundary tolerance) are false; restrict the grid to the rest.
    x_lo = max(0, int(np.floor(verts[:, 0].min() - BOUNDARY_TOL - 0.5)))
    x_hi = min(width, int(np.ceil(verts[:, 0].max() + BOUNDARY_TOL + 0.5)))
    y_lo = max(0, int(np.floor(verts[:, 1].min() - BOUNDARY_TOL - 0.5)))
    y_hi = min(height, int(np.ceil(verts[:, 1].max() + BOUNDARY_TOL + 0.5)))
    if x_lo >= x_hi or y_lo >= y_hi:
        return BinaryMask(width=width, height=height,
                          bits=np.zeros((height, width), dtype=bool))

    px = (np.arange(x_lo, x_hi, dtype=np.float64) + 0.5)[None, :]
    py = (np.arange(y_lo, y_hi, dtype=np.float64) + 0.5)[:, None]

    inside = np.zeros((y_hi - y_lo, x_hi - x_lo), dtype=bool)
    on_boundary = np.zeros_like(inside)
    for k in range(n):
        x1, y1 = verts[k]
        x2, y2 = verts[(k + 1) % n]
        # Even-odd crossing of a rightward ray from the pixel center.
        crosses = (y1 > py) != (y2 > py)
        if np.any(crosses):
            with np.errstate(divide="ignore", invalid="ignore"):
                x_int = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (px < x_int)
        # Distance from pixel centers to the edge segment.
        ex, ey = x2 - x1, y2 - y1
        seg_len2 = ex * ex + ey * ey
        if seg_len2 == 0.0:
            d2 = (px - x1) ** 2 + (py - y1) ** 2
        else:
            t = np.clip(((px - x1) * ex + (py - y1) * ey) / seg_len2, 0.0, 1.0)
            d2 = (px - (x1 + t * ex)) ** 2 + (py - (y1 + t * ey)) ** 2
        on_boundary |= d2 <= BOUNDARY_TOL * BOUNDARY_TOL

    bits = np.zeros((height, width), dtype=bool)
    bits[y_lo:y_hi, x_lo:x_hi] = inside | on_boundary
    return BinaryMask(width=width, height=height, bits=bits)


def dilate_mask(mask: BinaryMask, radius: int) -> BinaryMask:
    """Morphological dilation by a Euclidean disk of the given pixel radius."""
    if radius < 0:
        raise ValidationError("dilation radius must be >= 0")
    if radius == 0:
        return mask
    from scipy import ndimage

    span = np.arange(-radius, radius + 1)
    disk = span[:, None] ** 2 + span[None, :] ** 2 <= radius * radius
    bits = ndimage.binary_dilation(mask.bits, structure=disk)
    return BinaryMask(width=mask.width, height=mask.height, bits=bits)


def write_mask_pgm(mask: BinaryMask) -> bytes:
    """Encode as binary PGM (P5), maxval 255, true -> 255.  Deterministic."""
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    payload = np.where(mask.bits, 255, 0).astype(np.uint8).tobytes()
    return header + payload


def read_mask_pgm(data: bytes) -> BinaryMask:
    """Decode a binary PGM produced by :func:`write_mask_pgm`."""
    if not data.startswith(b"P5"):
        raise ValidationError("not a binary PGM (P5) file")
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # then a single whitespace byte before the payload.
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace separating header from payload
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ValidationError(f"unsupported PGM maxval {maxval}")
    payload = data[pos : pos + width * height]
    if len(payload) != width * height:
        raise ValidationError("PGM payload truncated")
    bits = np.frombuffer(payload, dtype=np.uint8).reshape(height, width) != 0
    return BinaryMask(width=width, height=height, bits=bits)


def landmark_mask(landmarks, width: int, height: int, dilation: int = 0) -> BinaryMask:
    """Convex-hull mask of a 98-landmark set, optionally dilated."""
    hull = convex_hull(landmarks)
    mask = rasterize_mask(hull, width, height)
    return dilate_mask(mask, dilation)


def openness_ratio(landmarks, spec: OpennessSpec) -> float:
    """Aspect ratio of mean top-bottom distance to left-right distance."""
    pts = np.asarray(landmarks, dtype=np.float64)
    top = pts[list(spec.top_indices)]
    bottom = pts[list(spec.bottom_indices)]
    left = pts[spec.left_index]
    right = pts[spec.right_index]
    d_lr = float(np.linalg.norm(right - left))
    if d_lr < 1e-9:
        raise DegenerateGeometryError(
            "left/right landmarks are coincident (d_lr below 1e-9)"
        )
    d_tb = float(np.mean(np.linalg.norm(top - bottom, axis=1)))
    return d_tb / d_lr


def eye_openness(landmarks) -> float:
    """Mean of the left-eye and right-eye openness ratios."""
    return 0.5 * (
        openness_ratio(landmarks, LEFT_EYE_SPEC)
        + openness_ratio(landmarks, RIGHT_EYE_SPEC)
    )


def mouth_openness(landmarks) -> float:
    return openness_ratio(landmarks, MOUTH_SPEC)
