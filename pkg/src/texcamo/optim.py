"""Multi-view texture attack loop: render each view of a minibatch, backprop
the suppression loss to texture space, optionally calibrate (NGC) and
decorrelate (LPGD) the per-view gradients, then take one Adam step on the
trainable texels.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lpgd import LpgdConfig, ViewGrad, cosine_matrix, decorrelate, orthogonalize, sort_by_loss
from .ngc import calibrate
from .renderer import (
    GradField,
    Texture,
    backprop_to_texture,
    brightness_factor,
    composite,
    make_background,
    rasterize,
    shade,
)
from .scene import PoseGrid, pose_grid
from .surrogate import detection_score_sweep, suppression_loss

__all__ = [
    "AdamState",
    "TrainConfig",
    "StepMetrics",
    "view_gradient",
    "train_step",
    "train",
    "mean_score",
    "coverage_report",
    "initial_texture",
]

# samplemaps are cached across steps while the whole grid stays below this many pixels
_CACHE_PIXEL_BUDGET = 60_000_000


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n_trainable):
        return cls(np.zeros((n_trainable, 3)), np.zeros((n_trainable, 3)))

    def update(self, params, grad, lr):
        """Return ``params`` after one Adam step; moments are updated in place."""
        self.step += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.step)
        v_hat = self.v / (1.0 - self.beta2 ** self.step)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainConfig:
    lr: float = 0.1
    epochs: int = 3
    k: int = 8
    tau: float = 8.0
    enable_ngc: bool = True
    enable_lpgd: bool = True
    seed: int = 0
    grid: PoseGrid = field(default_factory=PoseGrid)
    fov_deg: float = 60.0
    image_w: int = 256
    image_h: int = 256
    background: str = "gradient"
    augment_brightness: bool = False
    lpgd_eps: float = 1e-12
    threads: int = 1

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not (self.tau >= 0 and math.isfinite(self.tau)):
            raise ValueError("tau must be finite and nonnegative")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")

    def poses(self):
        return pose_grid(self.grid, self.fov_deg, self.image_w, self.image_h)


@dataclass
class StepMetrics:
    step: int
    epoch: int
    mean_loss: float
    losses: list
    grad_norm: float
    t_forward_backward: float
    t_ngc: float
    t_lpgd: float
    coverage_pre: int
    coverage_post: int
    lpgd_cosines: tuple = ()


def initial_texture(height, width, seed, mask=None):
    """Near-gray seeded start, uniform in [0.4, 0.6]."""
    return Texture.random_init(height, width, np.random.default_rng([int(seed), 0x7E7]),
                               mask=mask)


def view_gradient(texture, mesh, surrogate, pose, background, samplemap=None, brightness=1.0):
    """Loss and texture-space gradient for one view."""
    sm = samplemap if samplemap is not None else rasterize(mesh, pose, texture.shape)
    img = composite(shade(sm, texture), sm, background)
    if brightness != 1.0:
        img = img * brightness
    score, cache = surrogate.forward(img)
    loss = suppression_loss(score)
    g_img = surrogate.backward(cache)
    if brightness != 1.0:
        g_img = g_img * brightness
    return loss, backprop_to_texture(g_img, sm).masked(texture.mask)


class _Context:
    """Per-run shared state: backgrounds and the samplemap cache."""

    def __init__(self, mesh, texture_shape, config, n_poses):
        self.mesh = mesh
        self.texture_shape = texture_shape
        self.background = make_background(config.background, config.image_w, config.image_h)
        self.cache = {} if n_poses * config.image_w * config.image_h <= _CACHE_PIXEL_BUDGET else None

    def samplemap(self, pose):
        if self.cache is None:
            return rasterize(self.mesh, pose, self.texture_shape)
        sm = self.cache.get(pose)
        if sm is None:
            sm = self.cache[pose] = rasterize(self.mesh, pose, self.texture_shape)
        return sm


def train_step(texture, mesh, surrogate, batch_poses, config, adam_state, *,
               step=0, epoch=0, context=None, diagnostics=False):
    """One optimization step over ``batch_poses``.

    Returns the updated texture (clamped to [0, 1], untrainable texels
    untouched) and a :class:`StepMetrics`.
    """
    if context is None:
        context = _Context(mesh, texture.shape, config, len(batch_poses))
    mask = texture.mask

    def one_view(item):
        i, pose = item
        t0 = time.perf_counter()
        b = brightness_factor(config.seed, step, i) if config.augment_brightness else 1.0
        sm = context.samplemap(pose)
        loss, g = view_gradient(texture, mesh, surrogate, pose, context.background, sm, b)
        t1 = time.perf_counter()
        pre = int(g.touched.sum())
        if config.enable_ngc:
            g = calibrate(g, mask, config.tau)
        t2 = time.perf_counter()
        return ViewGrad(loss, g, i), pre, int(g.touched.sum()), t1 - t0, t2 - t1

    items = list(enumerate(batch_poses))
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(one_view, items))
    else:
        results = [one_view(it) for it in items]
    views = [r[0] for r in results]

    t0 = time.perf_counter()
    if config.enable_lpgd:
        update = decorrelate(views, LpgdConfig(k=len(views), eps=config.lpgd_eps), mask)
    else:
        total = np.zeros_like(views[0].grad.grad)
        for vg in views:
            total += vg.grad.grad
        update = GradField(total / len(views))
    t_lpgd = time.perf_counter() - t0

    cosines = ()
    if diagnostics:
        ordered = sort_by_loss(views)
        pre_c = cosine_matrix([vg.grad for vg in ordered])
        post_c = cosine_matrix(orthogonalize(ordered, config.lpgd_eps, mask))
        iu = np.triu_indices(len(views), 1)
        cosines = (tuple(pre_c[iu]), tuple(post_c[iu]))

    params = texture.rgb[mask]
    new_params = adam_state.update(params, update.grad[mask], config.lr)
    rgb = texture.rgb.copy()
    rgb[mask] = np.clip(new_params, 0.0, 1.0)
    losses = [vg.loss for vg in views]
    metrics = StepMetrics(
        step=step,
        epoch=epoch,
        mean_loss=float(np.mean(losses)),
        losses=losses,
        grad_norm=update.norm(),
        t_forward_backward=sum(r[3] for r in results),
        t_ngc=sum(r[4] for r in results) if config.enable_ngc else 0.0,
        t_lpgd=t_lpgd if config.enable_lpgd else 0.0,
        coverage_pre=sum(r[1] for r in results),
        coverage_post=sum(r[2] for r in results),
        lpgd_cosines=cosines,
    )
    return texture.with_rgb(rgb), metrics


def train(mesh, surrogate, config, texture=None, mask=None, on_step=None, diagnostics=False,
          texture_size=(64, 64)):
    """Run ``epochs`` passes over the pose grid in shuffled minibatches of ``k``.

    Each epoch has ``len(poses) // k`` steps; leftover poses of a shuffle are
    skipped that epoch.  ``on_step(texture, metrics)`` is called after every
    step.  Returns the final texture and the list of step metrics.
    """
    poses = config.poses()
    if config.k > len(poses):
        raise ValueError(f"k={config.k} exceeds the {len(poses)} available poses")
    if texture is None:
        texture = initial_texture(texture_size[0], texture_size[1], config.seed, mask)
    context = _Context(mesh, texture.shape, config, len(poses))
    adam = AdamState.zeros(int(texture.mask.sum()))
    log = []
    step = 0
    per_epoch = len(poses) // config.k
    for epoch in range(config.epochs):
        order = np.random.default_rng([int(config.seed), 1, epoch]).permutation(len(poses))
        for b in range(per_epoch):
            batch = [poses[i] for i in order[b * config.k:(b + 1) * config.k]]
            texture, metrics = train_step(texture, mesh, surrogate, batch, config, adam,
                                          step=step, epoch=epoch, context=context,
                                          diagnostics=diagnostics)
            log.append(metrics)
            if on_step is not None:
                on_step(texture, metrics)
            step += 1
    return texture, log


def mean_score(surrogate, mesh, texture, poses, background="gradient"):
    rows = detection_score_sweep(surrogate, mesh, texture, poses, background)
    return float(np.mean([s for _, s in rows]))


def coverage_report(mesh, texture, poses, tau):
    """Sampled-texel coverage per distance, before and after calibration.

    A texel counts as sampled when some pixel of the view maps to it.  Rows
    carry the mean counts over the poses at each distance and their ratio to
    the trainable-region size.
    """
    if not poses:
        raise ValueError("empty pose list")
    mask = texture.mask
    n_trainable = int(mask.sum())
    by_distance = {}
    for pose in poses:
        sampled = rasterize(mesh, pose, texture.shape).sampled_mask() & mask
        field = GradField(np.repeat(sampled[..., None], 3, axis=2).astype(np.float64))
        post = calibrate(field, mask, tau).touched
        by_distance.setdefault(pose.distance_m, []).append((int(sampled.sum()), int(post.sum())))
    rows = []
    for d in sorted(by_distance):
        counts = np.array(by_distance[d], dtype=np.float64)
        pre, post = counts.mean(axis=0)
        rows.append({
            "distance_m": d,
            "n_poses": len(counts),
            "sampled": float(pre),
            "calibrated": float(post),
            "sampled_ratio": float(pre / n_trainable),
            "calibrated_ratio": float(post / n_trainable),
        })
    return rows
