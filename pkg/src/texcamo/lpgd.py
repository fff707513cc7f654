"""Loss-prioritized gradient decorrelation.

Per-view gradients are ordered by descending loss, orthogonalized one after
another against the already-processed ones (classical Gram-Schmidt: each
coefficient uses the raw input gradient), then averaged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .renderer import GradField

__all__ = [
    "ViewGrad",
    "LpgdConfig",
    "sort_by_loss",
    "orthogonalize",
    "aggregate",
    "decorrelate",
    "cosine_matrix",
    "relative_eps",
]

DEFAULT_REL_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class ViewGrad:
    loss: float
    grad: GradField
    view_index: int

    def __post_init__(self):
        if not np.isfinite(self.loss):
            raise ValueError(f"view {self.view_index}: non-finite loss {self.loss}")


@dataclass(frozen=True)
class LpgdConfig:
    """``eps`` is relative: the skip threshold is ``eps`` times the mean
    squared norm of the batch inputs."""

    k: int = 8
    eps: float = DEFAULT_REL_EPS

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


def sort_by_loss(batch):
    """Descending loss; equal losses stay in ascending ``view_index`` order."""
    if not batch:
        raise ValueError("empty batch")
    return sorted(batch, key=lambda vg: (-vg.loss, vg.view_index))


def relative_eps(vectors, eps=DEFAULT_REL_EPS):
    """Absolute squared-norm threshold from the mean squared norm of ``vectors``."""
    if len(vectors) == 0:
        return 0.0
    return eps * float(np.mean([np.dot(v, v) for v in vectors]))


def _as_vectors(grads):
    return [np.asarray(g.grad if isinstance(g, GradField) else g, dtype=np.float64).reshape(-1)
            for g in grads]


def orthogonalize(ordered, eps=DEFAULT_REL_EPS, mask=None):
    """Sequential projection onto the complement of the earlier outputs.

    ``ordered`` holds ViewGrads (or GradFields) already sorted.  Inner products
    run over the trainable texels selected by ``mask`` (all texels if None);
    since gradients vanish outside the mask this only affects cost.
    Outputs whose squared norm falls below the threshold become exact zeros
    and are not used as projection directions for later gradients.
    """
    fields = [vg.grad if isinstance(vg, ViewGrad) else vg for vg in ordered]
    if not fields:
        return []
    shape = fields[0].grad.shape
    if mask is not None and np.all(mask):
        mask = None  # full region: skip the gather and scatter
    if mask is None:
        vecs = _as_vectors(fields)
    else:
        vecs = [f.grad[mask].reshape(-1) for f in fields]
    threshold = relative_eps(vecs, eps)
    basis = []  # (output vector, squared norm) for usable directions
    outs = []
    for g in vecs:
        r = g.copy()
        for b, bb in basis:
            r -= (np.dot(g, b) / bb) * b
        rr = float(np.dot(r, r))
        if rr >= threshold and rr > 0.0:
            basis.append((r, rr))
        else:
            # redundant with earlier views: leave no residual noise behind
            r = np.zeros_like(r)
        outs.append(r)
    result = []
    for f, r in zip(fields, outs):
        if mask is None:
            full = r.reshape(shape)
        else:
            full = np.zeros(shape)
            full[mask] = r.reshape(-1, 3)
        result.append(GradField(full))
    # the highest-priority gradient passes through untouched
    result[0] = GradField(fields[0].grad.copy())
    return result


def aggregate(orthogonal, k):
    """Texelwise mean of ``k`` orthogonalized fields."""
    if len(orthogonal) != k or k < 1:
        raise ValueError(f"expected {k} fields, got {len(orthogonal)}")
    total = np.zeros_like(orthogonal[0].grad)
    for f in orthogonal:
        total += f.grad
    return GradField(total / k)


def decorrelate(batch, config=None, mask=None):
    config = config or LpgdConfig(k=len(batch))
    ordered = sort_by_loss(batch)
    return aggregate(orthogonalize(ordered, config.eps, mask), len(ordered))


def cosine_matrix(fields):
    """Pairwise cosine similarities (zero where a norm vanishes)."""
    vecs = _as_vectors(fields)
    k = len(vecs)
    out = np.zeros((k, k))
    norms = [np.linalg.norm(v) for v in vecs]
    for i in range(k):
        for j in range(k):
            if norms[i] > 0 and norms[j] > 0:
                out[i, j] = np.dot(vecs[i], vecs[j]) / (norms[i] * norms[j])
    return out
