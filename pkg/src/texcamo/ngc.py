"""Nearest gradient calibration.

Texels that received gradient in a view (the sampled set) lend their
gradient to unsampled trainable texels whose nearest sampled texel lies
within a radius ``tau``, measured in texel units on the UV grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .renderer import GradField

__all__ = ["TexelIndex", "NgcConfig", "build_index", "nearest", "nearest_many", "calibrate"]

LEAF_SIZE = 16


@dataclass(frozen=True)
class NgcConfig:
    tau: float = 8.0

    def __post_init__(self):
        if not math.isfinite(self.tau) or self.tau < 0:
            raise ValueError(f"tau must be finite and nonnegative, got {self.tau}")


class TexelIndex:
    """Balanced KD-tree over integer 2D texel coordinates.

    Node ``n`` covers ``points[lo[n]:hi[n]]`` (points stored in tree order);
    leaves have ``left[n] == -1``.  ``bbox[n]`` is ``(umin, vmin, umax, vmax)``.
    """

    def __init__(self, points, ids=None, leaf_size=LEAF_SIZE):
        pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
        if len(pts) == 0:
            raise ValueError("cannot index an empty point set")
        ids = np.arange(len(pts), dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
        if ids.shape != (len(pts),):
            raise ValueError("ids must have one entry per point")
        self.leaf_size = int(leaf_size)
        order = np.arange(len(pts))
        lo, hi, left, right, bbox = [], [], [], [], []

        def node(start, stop):
            n = len(lo)
            sub = pts[order[start:stop]]
            mins, maxs = sub.min(axis=0), sub.max(axis=0)
            lo.append(start)
            hi.append(stop)
            left.append(-1)
            right.append(-1)
            bbox.append((mins[0], mins[1], maxs[0], maxs[1]))
            if stop - start <= self.leaf_size or (mins == maxs).all():
                return n
            axis = int(np.argmax(maxs - mins))
            mid = (stop - start) // 2
            part = np.argpartition(sub[:, axis], mid, kind="introselect")
            order[start:stop] = order[start:stop][part]
            left[n] = node(start, start + mid)
            right[n] = node(start + mid, stop)
            return n

        node(0, len(pts))
        self.points = np.ascontiguousarray(pts[order])
        self.ids = np.ascontiguousarray(ids[order])
        self.lo = np.asarray(lo, dtype=np.int64)
        self.hi = np.asarray(hi, dtype=np.int64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.bbox = np.ascontiguousarray(np.asarray(bbox, dtype=np.int64).reshape(-1, 4))

    def __len__(self):
        return len(self.points)

    def query_d2(self, queries, max_d2=-1):
        """Nearest (id, squared distance) per query row; -1 where none within ``max_d2``."""
        q = np.ascontiguousarray(np.asarray(queries, dtype=np.int64).reshape(-1, 2))
        return kernels.kd_nearest(self.points, self.ids, self.lo, self.hi, self.left,
                                  self.right, self.bbox, q, int(max_d2))


def build_index(points, ids=None, leaf_size=LEAF_SIZE):
    """KD-tree over ``points`` (``(N, 2)`` integer texel coordinates).

    ``ids`` default to the point positions; nearest-neighbor ties resolve to
    the smallest id.
    """
    return TexelIndex(points, ids, leaf_size)


def nearest(index, p):
    """``(id, distance)`` of the stored point closest to ``p``."""
    ids, d2 = index.query_d2(np.asarray(p).reshape(1, 2))
    return int(ids[0]), math.sqrt(int(d2[0]))


def nearest_many(index, queries):
    ids, d2 = index.query_d2(queries)
    return ids, np.sqrt(d2.astype(np.float64))


def _radius_bound(tau):
    """Squared-distance cap for pruning, -1 when effectively unbounded."""
    if tau * tau >= 2.0 ** 62:
        return -1
    return int(math.floor(tau * tau)) + 1


def calibrate(grad, trainable_mask, tau):
    """Copy each sampled texel's gradient to unsampled trainable texels nearby.

    Texels with gradient keep it; every other trainable texel whose nearest
    gradient-carrying texel is at distance <= ``tau`` receives that texel's
    gradient; everything else (including all untrainable texels) is zero.
    """
    mask = np.asarray(trainable_mask, dtype=bool)
    if mask.shape != grad.shape:
        raise ValueError("mask shape differs from gradient field")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    sampled = grad.touched & mask
    out = np.where(sampled[..., None], grad.grad, 0.0)
    free = mask & ~sampled
    if not sampled.any() or tau < 1.0 or not free.any():
        # integer texel grid: any unsampled texel is at least 1 away
        return GradField(out)
    width = grad.shape[1]
    sv, su = np.nonzero(sampled)
    index = build_index(np.stack([su, sv], axis=1), sv * width + su)
    fv, fu = np.nonzero(free)
    ids, d2 = index.query_d2(np.stack([fu, fv], axis=1), _radius_bound(tau))
    hit = ids >= 0
    hit[hit] = np.sqrt(d2[hit].astype(np.float64)) <= tau
    src = ids[hit]
    out[fv[hit], fu[hit]] = grad.grad[src // width, src % width]
    return GradField(out)
