"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``.

Used when the extension is not built (or ``TEXCAMO_PURE_PYTHON=1``).  The
arithmetic follows the Cython source step by step, so both backends agree
bit for bit; they differ only in speed.
"""
import math

import numpy as np

INT64_MAX = np.iinfo(np.int64).max


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def rasterize_faces(screen, invz, uvz, valid, width, height, tex_w, tex_h):
    tu = np.full((height, width), -1, dtype=np.int32)
    tv = np.full((height, width), -1, dtype=np.int32)
    zbuf = np.full((height, width), np.inf)
    screen = screen.tolist()
    invz = invz.tolist()
    uvz = uvz.tolist()
    zrows = zbuf.tolist()
    hits = {}
    for f in range(len(screen)):
        if not valid[f]:
            continue
        (x0, y0), (x1, y1), (x2, y2) = screen[f]
        iz0, iz1, iz2 = invz[f]
        (uz0, vz0), (uz1, vz1), (uz2, vz2) = uvz[f]
        area = _edge(x0, y0, x1, y1, x2, y2)
        if area == 0.0:
            continue
        xmin, xmax = min(x0, x1, x2), max(x0, x1, x2)
        ymin, ymax = min(y0, y1, y2), max(y0, y1, y2)
        if xmax < 0.0 or ymax < 0.0 or xmin > width or ymin > height:
            continue
        j0 = int(max(0.0, math.floor(xmin - 0.5)))
        j1 = int(min(width - 1.0, math.floor(xmax - 0.5) + 1.0))
        i0 = int(max(0.0, math.floor(ymin - 0.5)))
        i1 = int(min(height - 1.0, math.floor(ymax - 0.5) + 1.0))
        for i in range(i0, i1 + 1):
            py = i + 0.5
            zrow = zrows[i]
            for j in range(j0, j1 + 1):
                px = j + 0.5
                w0 = _edge(x1, y1, x2, y2, px, py)
                w1 = _edge(x2, y2, x0, y0, px, py)
                w2 = _edge(x0, y0, x1, y1, px, py)
                if area > 0.0:
                    if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                        continue
                elif w0 > 0.0 or w1 > 0.0 or w2 > 0.0:
                    continue
                b0 = w0 / area
                b1 = w1 / area
                b2 = w2 / area
                iz = b0 * iz0 + b1 * iz1 + b2 * iz2
                depth = 1.0 / iz
                if not depth < zrow[j]:
                    continue
                u = (b0 * uz0 + b1 * uz1 + b2 * uz2) / iz
                v = (b0 * vz0 + b1 * vz1 + b2 * vz2) / iz
                tj = min(max(math.floor(u * tex_w), 0), tex_w - 1)
                ti = min(max(math.floor(v * tex_h), 0), tex_h - 1)
                zrow[j] = depth
                hits[i, j] = (tj, ti)
    zbuf = np.array(zrows, dtype=np.float64).reshape(height, width)
    for (i, j), (tj, ti) in hits.items():
        tu[i, j] = tj
        tv[i, j] = ti
    return tu, tv, zbuf


def _box_d2(bbox, n, qu, qv):
    umin, vmin, umax, vmax = bbox[n]
    du = umin - qu if qu < umin else (qu - umax if qu > umax else 0)
    dv = vmin - qv if qv < vmin else (qv - vmax if qv > vmax else 0)
    return du * du + dv * dv


def kd_nearest(points, ids, lo, hi, left, right, bbox, queries, max_d2):
    points = points.tolist()
    ids = ids.tolist()
    lo, hi, left, right = lo.tolist(), hi.tolist(), left.tolist(), right.tolist()
    bbox = bbox.tolist()
    out_id = np.empty(len(queries), dtype=np.int64)
    out_d2 = np.empty(len(queries), dtype=np.int64)
    for q, (qu, qv) in enumerate(queries.tolist()):
        best_d2 = max_d2 if max_d2 >= 0 else INT64_MAX
        best_id = INT64_MAX
        stack = [0]
        while stack:
            n = stack.pop()
            if _box_d2(bbox, n, qu, qv) > best_d2:
                continue
            if left[n] < 0:
                for k in range(lo[n], hi[n]):
                    du = points[k][0] - qu
                    dv = points[k][1] - qv
                    d2 = du * du + dv * dv
                    if d2 < best_d2 or (d2 == best_d2 and ids[k] < best_id):
                        best_d2 = d2
                        best_id = ids[k]
            else:
                a, b = left[n], right[n]
                if _box_d2(bbox, a, qu, qv) <= _box_d2(bbox, b, qu, qv):
                    stack += (b, a)
                else:
                    stack += (a, b)
        if best_id == INT64_MAX:
            out_id[q] = out_d2[q] = -1
        else:
            out_id[q] = best_id
            out_d2[q] = best_d2
    return out_id, out_d2
