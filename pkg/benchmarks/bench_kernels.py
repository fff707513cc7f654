"""Compare the compiled kernels with the pure-Python fallback.

Both backends are imported directly, so the comparison does not depend on
``TEXCAMO_PURE_PYTHON``.  Each kernel runs on identical inputs; outputs are
checked for equality before timings are reported.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--image 96] [--queries 2000]
"""
import argparse
import time

import numpy as np

from texcamo import _pykernels, kernels
from texcamo.ngc import build_index
from texcamo.renderer import face_arrays
from texcamo.scene import bundled_car_path, load_obj, make_pose


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--image", type=int, default=96, help="square image side for rasterization")
    ap.add_argument("--texture", type=int, default=256, help="texture side")
    ap.add_argument("--points", type=int, default=20_000, help="stored points for the KD-tree")
    ap.add_argument("--queries", type=int, default=2_000)
    args = ap.parse_args(argv)

    if kernels.BACKEND != "cython":
        print("compiled extension unavailable; only the fallback can run")
        return 1
    from texcamo import _kernels

    mesh = load_obj(bundled_car_path())
    pose = make_pose(45, 15, 6, 60, args.image, args.image)
    raster_args = face_arrays(mesh, pose) + (args.image, args.image, args.texture, args.texture)

    rng = np.random.default_rng(0)
    pts = rng.integers(0, args.texture, (args.points, 2))
    index = build_index(pts, pts[:, 1] * args.texture + pts[:, 0])
    queries = rng.integers(0, args.texture, (args.queries, 2)).astype(np.int64)
    kd_args = (index.points, index.ids, index.lo, index.hi, index.left, index.right, index.bbox,
               queries, -1)

    rows = []
    for name, fast, slow, fargs in (
        ("rasterize_faces", _kernels.rasterize_faces, _pykernels.rasterize_faces, raster_args),
        ("kd_nearest", _kernels.kd_nearest, _pykernels.kd_nearest, kd_args),
    ):
        t_fast, out_fast = best_of(lambda: fast(*fargs), args.repeat)
        t_slow, out_slow = best_of(lambda: slow(*fargs), args.repeat)
        same = all(np.array_equal(a, b) for a, b in zip(out_fast, out_slow))
        rows.append((name, t_fast, t_slow, same))

    print(f"{'kernel':<16} {'cython s':>10} {'python s':>10} {'speedup':>8}  identical")
    for name, t_fast, t_slow, same in rows:
        print(f"{name:<16} {t_fast:>10.5f} {t_slow:>10.5f} {t_slow / t_fast:>8.1f}  {same}")
    return 0 if all(r[3] for r in rows) else 2


if __name__ == "__main__":
    raise SystemExit(main())
