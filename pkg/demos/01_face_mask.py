"""Convex-hull face mask from 98 landmarks, rasterized and saved as PGM.

Builds a synthetic landmark set, computes the convex hull, rasterizes it at
pixel-center resolution and prints a coarse ASCII rendering.
"""

from pathlib import Path

import numpy as np

from anoneval.geometry import convex_hull, rasterize_mask, write_mask_pgm


def synthetic_face(cx=32.0, cy=32.0, size=22.0):
    rng = np.random.default_rng(3)
    t = np.linspace(0, 2 * np.pi, 98, endpoint=False)
    rx = size * (1.0 + 0.08 * np.sin(3 * t))
    pts = np.stack([cx + rx * np.cos(t) * 0.8, cy + rx * np.sin(t)], axis=1)
    return pts + rng.normal(scale=0.5, size=pts.shape)


def main():
    landmarks = synthetic_face()
    hull = convex_hull(landmarks)
    print(f"landmarks: {len(landmarks)}, hull vertices: {len(hull.vertices)}")
    print(f"hull is counter-clockwise (signed area {hull.signed_area():.1f} > 0)")

    mask = rasterize_mask(hull, 64, 64)
    covered = int(mask.bits.sum())
    print(f"mask covers {covered} of {64 * 64} pixels")

    out = Path("demo_output")
    out.mkdir(exist_ok=True)
    (out / "face_mask.pgm").write_bytes(write_mask_pgm(mask))
    print(f"wrote {out / 'face_mask.pgm'}")

    for i in range(0, 64, 4):
        print("".join("#" if mask.bits[i, j] else "." for j in range(0, 64, 2)))


if __name__ == "__main__":
    main()
