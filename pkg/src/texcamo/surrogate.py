"""Frozen two-layer convolutional objectness scorer with a hand-written
reverse pass.

score = mean(relu(conv2(relu(conv1(x))))) over all output positions and
channels; valid padding, stride 1, no biases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .renderer import composite, make_background, rasterize, shade

__all__ = ["Surrogate", "ForwardCache", "suppression_loss", "detection_score_sweep"]


def _conv(x, w):
    """Valid cross-correlation of (H, W, C) ``x`` with (F, k, k, C) filters."""
    win = sliding_window_view(x, w.shape[1:3], axis=(0, 1))  # Ho, Wo, C, k, k
    return np.tensordot(win, w, axes=([2, 3, 4], [3, 1, 2]))


def _conv_adjoint(g, w, shape):
    """Gradient w.r.t. the input of ``_conv`` given output gradient ``g``."""
    nf, k, _, c = w.shape
    ho, wo = g.shape[:2]
    cols = g.reshape(ho * wo, nf) @ w.reshape(nf, -1)
    patches = np.ascontiguousarray(cols.reshape(ho, wo, k, k, c).transpose(2, 3, 0, 1, 4))
    out = np.zeros(shape)
    for dy in range(k):
        for dx in range(k):
            out[dy:dy + ho, dx:dx + wo] += patches[dy, dx]
    return out


@dataclass(frozen=True, eq=False)
class ForwardCache:
    image_shape: tuple
    z1: np.ndarray
    a1: np.ndarray
    z2: np.ndarray
    a2: np.ndarray


class Surrogate:
    """Fixed-weight detector stand-in; weights are drawn once from ``seed``."""

    n_filters = 8
    k1 = 5
    k2 = 3

    def __init__(self, seed=42):
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        w1 = rng.standard_normal((self.n_filters, self.k1, self.k1, 3)) / np.sqrt(75.0)
        w2 = rng.standard_normal((self.n_filters, self.k2, self.k2, self.n_filters)) / np.sqrt(72.0)
        for w in (w1, w2):
            w.setflags(write=False)
        self.conv1 = w1
        self.conv2 = w2

    @property
    def receptive_field(self):
        return self.k1 + self.k2 - 1

    def forward(self, image):
        image = np.asarray(image, dtype=np.float64)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError("expected an (H, W, 3) image")
        if min(image.shape[:2]) < self.receptive_field:
            raise ValueError(
                f"image {image.shape[:2]} smaller than receptive field {self.receptive_field}")
        z1 = _conv(image, self.conv1)
        a1 = np.maximum(z1, 0.0)
        z2 = _conv(a1, self.conv2)
        a2 = np.maximum(z2, 0.0)
        score = float(a2.mean())
        return score, ForwardCache(image.shape, z1, a1, z2, a2)

    def backward(self, cache):
        """Gradient of the score with respect to the input image."""
        h, w, _ = cache.image_shape
        if cache.z1.shape != (h - self.k1 + 1, w - self.k1 + 1, self.n_filters):
            raise ValueError("cache does not match this surrogate")
        g2 = np.where(cache.z2 > 0.0, 1.0 / cache.z2.size, 0.0)
        ga1 = _conv_adjoint(g2, self.conv2, cache.z1.shape)
        g1 = np.where(cache.z1 > 0.0, ga1, 0.0)
        return _conv_adjoint(g1, self.conv1, cache.image_shape)

    def score(self, image):
        return self.forward(image)[0]


def suppression_loss(score):
    """Objective to minimize; lower means less detection evidence."""
    return score


def detection_score_sweep(surrogate, mesh, texture, poses, background="gradient"):
    """Render, composite and score ``texture`` at every pose.

    ``background`` is an image (shared by all poses) or a spec accepted by
    :func:`texcamo.renderer.make_background`.  Returns ``(pose, score)`` rows.
    """
    if not poses:
        raise ValueError("empty pose list")
    rows = []
    bgs = {}
    for pose in poses:
        key = (pose.image_h, pose.image_w)
        if isinstance(background, np.ndarray):
            bg = background
        else:
            if key not in bgs:
                bgs[key] = make_background(background, pose.image_w, pose.image_h)
            bg = bgs[key]
        sm = rasterize(mesh, pose, texture.shape)
        img = composite(shade(sm, texture), sm, bg)
        rows.append((pose, surrogate.score(img)))
    return rows
