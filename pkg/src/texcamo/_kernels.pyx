# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: triangle fill with texel provenance, batched KD-tree queries.

Arithmetic mirrors ``_pykernels`` operation for operation so both backends
produce bit-identical results.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor
from libc.stdint cimport int64_t, INT64_MAX

cnp.import_array()


cdef inline double _edge(double ax, double ay, double bx, double by,
                         double px, double py) noexcept nogil:
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def rasterize_faces(const double[:, :, ::1] screen, const double[:, ::1] invz,
                    const double[:, :, ::1] uvz, const unsigned char[::1] valid,
                    int width, int height, int tex_w, int tex_h):
    cdef cnp.ndarray[cnp.int32_t, ndim=2] tu_arr = np.full((height, width), -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] tv_arr = np.full((height, width), -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] z_arr = np.full((height, width), np.inf)
    cdef int[:, ::1] tu = tu_arr
    cdef int[:, ::1] tv = tv_arr
    cdef double[:, ::1] zbuf = z_arr
    cdef Py_ssize_t f, nf = screen.shape[0]
    cdef double x0, y0, x1, y1, x2, y2, area, w0, w1, w2, b0, b1, b2
    cdef double px, py, iz, depth, u, v, xmin, xmax, ymin, ymax
    cdef int i, j, i0, i1, j0, j1, ti, tj
    with nogil:
        for f in range(nf):
            if not valid[f]:
                continue
            x0 = screen[f, 0, 0]; y0 = screen[f, 0, 1]
            x1 = screen[f, 1, 0]; y1 = screen[f, 1, 1]
            x2 = screen[f, 2, 0]; y2 = screen[f, 2, 1]
            area = _edge(x0, y0, x1, y1, x2, y2)
            if area == 0.0:
                continue
            xmin = min(x0, min(x1, x2)); xmax = max(x0, max(x1, x2))
            ymin = min(y0, min(y1, y2)); ymax = max(y0, max(y1, y2))
            if xmax < 0.0 or ymax < 0.0 or xmin > width or ymin > height:
                continue
            j0 = <int>max(0.0, floor(xmin - 0.5))
            j1 = <int>min(width - 1.0, floor(xmax - 0.5) + 1.0)
            i0 = <int>max(0.0, floor(ymin - 0.5))
            i1 = <int>min(height - 1.0, floor(ymax - 0.5) + 1.0)
            for i in range(i0, i1 + 1):
                py = i + 0.5
                for j in range(j0, j1 + 1):
                    px = j + 0.5
                    w0 = _edge(x1, y1, x2, y2, px, py)
                    w1 = _edge(x2, y2, x0, y0, px, py)
                    w2 = _edge(x0, y0, x1, y1, px, py)
                    if area > 0.0:
                        if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                            continue
                    else:
                        if w0 > 0.0 or w1 > 0.0 or w2 > 0.0:
                            continue
                    b0 = w0 / area
                    b1 = w1 / area
                    b2 = w2 / area
                    iz = b0 * invz[f, 0] + b1 * invz[f, 1] + b2 * invz[f, 2]
                    depth = 1.0 / iz
                    if not depth < zbuf[i, j]:
                        continue
                    u = (b0 * uvz[f, 0, 0] + b1 * uvz[f, 1, 0] + b2 * uvz[f, 2, 0]) / iz
                    v = (b0 * uvz[f, 0, 1] + b1 * uvz[f, 1, 1] + b2 * uvz[f, 2, 1]) / iz
                    tj = <int>floor(u * tex_w)
                    ti = <int>floor(v * tex_h)
                    if tj < 0:
                        tj = 0
                    elif tj > tex_w - 1:
                        tj = tex_w - 1
                    if ti < 0:
                        ti = 0
                    elif ti > tex_h - 1:
                        ti = tex_h - 1
                    zbuf[i, j] = depth
                    tu[i, j] = tj
                    tv[i, j] = ti
    return tu_arr, tv_arr, z_arr


cdef inline int64_t _box_d2(const int64_t[:, ::1] bbox, Py_ssize_t n,
                            int64_t qu, int64_t qv) noexcept nogil:
    cdef int64_t du = 0, dv = 0
    if qu < bbox[n, 0]:
        du = bbox[n, 0] - qu
    elif qu > bbox[n, 2]:
        du = qu - bbox[n, 2]
    if qv < bbox[n, 1]:
        dv = bbox[n, 1] - qv
    elif qv > bbox[n, 3]:
        dv = qv - bbox[n, 3]
    return du * du + dv * dv


def kd_nearest(const int64_t[:, ::1] points, const int64_t[::1] ids,
               const int64_t[::1] lo, const int64_t[::1] hi,
               const int64_t[::1] left, const int64_t[::1] right,
               const int64_t[:, ::1] bbox, const int64_t[:, ::1] queries,
               int64_t max_d2):
    """Nearest stored point per query; ties go to the smaller id.

    ``max_d2 < 0`` means unbounded.  Queries with nothing within ``max_d2``
    get id -1 and d2 -1.
    """
    cdef Py_ssize_t nq = queries.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_id = np.empty(nq, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_d2 = np.empty(nq, dtype=np.int64)
    cdef int64_t[::1] oid = out_id
    cdef int64_t[::1] od2 = out_d2
    cdef cnp.ndarray[cnp.int64_t, ndim=1] stack_arr = np.empty(max(64, 2 * lo.shape[0] + 2), dtype=np.int64)
    cdef int64_t[::1] stack = stack_arr
    cdef Py_ssize_t q, top, k
    cdef int64_t n, qu, qv, best_d2, best_id, d2, du, dv, a, b, da, db
    with nogil:
        for q in range(nq):
            qu = queries[q, 0]
            qv = queries[q, 1]
            best_d2 = max_d2 if max_d2 >= 0 else INT64_MAX
            best_id = INT64_MAX
            top = 0
            stack[0] = 0
            top = 1
            while top > 0:
                top -= 1
                n = stack[top]
                if _box_d2(bbox, n, qu, qv) > best_d2:
                    continue
                if left[n] < 0:
                    for k in range(lo[n], hi[n]):
                        du = points[k, 0] - qu
                        dv = points[k, 1] - qv
                        d2 = du * du + dv * dv
                        if d2 < best_d2 or (d2 == best_d2 and ids[k] < best_id):
                            best_d2 = d2
                            best_id = ids[k]
                else:
                    a = left[n]
                    b = right[n]
                    da = _box_d2(bbox, a, qu, qv)
                    db = _box_d2(bbox, b, qu, qv)
                    # push the farther child first so the nearer one is popped next
                    if da <= db:
                        stack[top] = b
                        stack[top + 1] = a
                    else:
                        stack[top] = a
                        stack[top + 1] = b
                    top += 2
            if best_id == INT64_MAX:
                oid[q] = -1
                od2[q] = -1
            else:
                oid[q] = best_id
                od2[q] = best_d2
    return out_id, out_d2
