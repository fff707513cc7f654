"""Generate the bundled low-poly car mesh (src/texcamo/data/car.obj).

Two stacked solids (body box, tapered cabin) with one UV chart per planar
face, shelf-packed into the unit square.  Run once; the output is committed.
"""
import sys
from pathlib import Path

import numpy as np

BODY = dict(x=(-2.2, 2.2), y=(-0.9, 0.9), z=(0.3, 1.0))
CABIN_LOW = dict(x=(-1.2, 1.0), y=(-0.8, 0.8), z=1.0)
CABIN_TOP = dict(x=(-0.8, 0.5), y=(-0.7, 0.7), z=1.5)
PAD = 0.02


def box_faces():
    (x0, x1), (y0, y1), (z0, z1) = BODY["x"], BODY["y"], BODY["z"]
    c = lambda x, y, z: (x, y, z)  # noqa: E731
    return [
        [c(x0, y0, z1), c(x1, y0, z1), c(x1, y1, z1), c(x0, y1, z1)],  # top
        [c(x0, y0, z0), c(x0, y1, z0), c(x1, y1, z0), c(x1, y0, z0)],  # bottom
        [c(x0, y0, z0), c(x1, y0, z0), c(x1, y0, z1), c(x0, y0, z1)],  # right side
        [c(x1, y1, z0), c(x0, y1, z0), c(x0, y1, z1), c(x1, y1, z1)],  # left side
        [c(x1, y0, z0), c(x1, y1, z0), c(x1, y1, z1), c(x1, y0, z1)],  # front
        [c(x0, y1, z0), c(x0, y0, z0), c(x0, y0, z1), c(x0, y1, z1)],  # rear
    ]


def cabin_faces():
    (a0, a1), (b0, b1), zl = CABIN_LOW["x"], CABIN_LOW["y"], CABIN_LOW["z"]
    (c0, c1), (d0, d1), zt = CABIN_TOP["x"], CABIN_TOP["y"], CABIN_TOP["z"]
    return [
        [(c0, d0, zt), (c1, d0, zt), (c1, d1, zt), (c0, d1, zt)],  # roof
        [(a0, b0, zl), (a1, b0, zl), (c1, d0, zt), (c0, d0, zt)],  # right
        [(a1, b1, zl), (a0, b1, zl), (c0, d1, zt), (c1, d1, zt)],  # left
        [(a1, b0, zl), (a1, b1, zl), (c1, d1, zt), (c1, d0, zt)],  # windshield
        [(a0, b1, zl), (a0, b0, zl), (c0, d0, zt), (c0, d1, zt)],  # rear window
    ]


def flatten(poly):
    p = np.asarray(poly, dtype=float)
    e1 = p[1] - p[0]
    e1 /= np.linalg.norm(e1)
    n = np.cross(p[1] - p[0], p[-1] - p[0])
    n /= np.linalg.norm(n)
    e2 = np.cross(n, e1)
    local = np.stack([(p - p[0]) @ e1, (p - p[0]) @ e2], axis=1)
    return local - local.min(axis=0)


def pack(sizes, scale):
    """Shelf-pack rectangles; returns offsets or None if they overflow."""
    order = sorted(range(len(sizes)), key=lambda i: -sizes[i][1])
    offsets = [None] * len(sizes)
    x, y, shelf_h = PAD, PAD, 0.0
    for i in order:
        w, h = sizes[i][0] * scale, sizes[i][1] * scale
        if x + w + PAD > 1.0:
            x, y = PAD, y + shelf_h + PAD
            shelf_h = 0.0
        if x + w + PAD > 1.0 or y + h + PAD > 1.0:
            return None
        offsets[i] = (x, y)
        x += w + PAD
        shelf_h = max(shelf_h, h)
    return offsets


def main(out):
    polys = box_faces() + cabin_faces()
    flats = [flatten(p) for p in polys]
    sizes = [tuple(f.max(axis=0)) for f in flats]
    lo, hi = 0.01, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if pack(sizes, mid) is None:
            hi = mid
        else:
            lo = mid
    offsets = pack(sizes, lo)

    lines = ["# low-poly car, generated by tools/make_car_obj.py", "o car"]
    v_lines, vt_lines, f_lines = [], [], []
    for poly, flat, off in zip(polys, flats, offsets):
        base = len(v_lines)
        for (x, y, z), (u, v) in zip(poly, flat):
            v_lines.append(f"v {x:.6f} {y:.6f} {z:.6f}")
            vt_lines.append(f"vt {off[0] + u * lo:.6f} {off[1] + v * lo:.6f}")
        idx = [base + i + 1 for i in range(len(poly))]
        f_lines.append("f " + " ".join(f"{i}/{i}" for i in idx))
    Path(out).write_text("\n".join(lines + v_lines + vt_lines + f_lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/texcamo/data/car.obj")
