"""Software rasterizer with texel provenance, nearest-texel shading,
background compositing, and the scatter of image gradients back to texels.

Images are ``(H, W, 3)`` float64 arrays.  Texture row ``r`` holds texels with
``v`` in ``[r/H, (r+1)/H)``; column ``c`` likewise for ``u``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

__all__ = [
    "Texture",
    "SampleMap",
    "GradField",
    "rasterize",
    "shade",
    "composite",
    "backprop_to_texture",
    "make_background",
    "brightness_factor",
    "NEAR_PLANE",
]

NEAR_PLANE = 1e-3


class Texture:
    """Trainable RGB texel grid with an immutable trainable-region mask."""

    def __init__(self, rgb, mask=None):
        rgb = np.array(rgb, dtype=np.float64)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise ValueError("texture rgb must be (H, W, 3)")
        self.rgb = np.clip(rgb, 0.0, 1.0)
        if mask is None:
            mask = np.ones(rgb.shape[:2], dtype=bool)
        mask = np.array(mask, dtype=bool)
        if mask.shape != rgb.shape[:2]:
            raise ValueError("mask shape must match texture")
        if not mask.any():
            raise ValueError("trainable region is empty")
        mask.setflags(write=False)
        self.mask = mask

    @classmethod
    def uniform(cls, height, width, value=0.5, mask=None):
        return cls(np.full((height, width, 3), value), mask)

    @classmethod
    def random_init(cls, height, width, rng, low=0.4, high=0.6, mask=None):
        rng = np.random.default_rng(rng)
        return cls(rng.uniform(low, high, size=(height, width, 3)), mask)

    @property
    def height(self):
        return self.rgb.shape[0]

    @property
    def width(self):
        return self.rgb.shape[1]

    @property
    def shape(self):
        return self.rgb.shape[:2]

    def with_rgb(self, rgb):
        """New texture sharing this mask; values are clamped to [0, 1]."""
        return Texture(rgb, self.mask)

    def copy(self):
        return Texture(self.rgb.copy(), self.mask)


@dataclass(frozen=True, eq=False)
class SampleMap:
    """Per-pixel rasterization result.

    ``texel_u``/``texel_v`` are -1 and ``depth`` is inf where nothing is
    covered.
    """

    texel_u: np.ndarray
    texel_v: np.ndarray
    depth: np.ndarray
    tex_w: int
    tex_h: int

    @property
    def covered(self):
        return self.texel_u >= 0

    @property
    def shape(self):
        return self.texel_u.shape

    def texel_ids(self):
        """Row-major texel id per covered pixel, in pixel raster order."""
        cov = self.covered
        return self.texel_v[cov].astype(np.int64) * self.tex_w + self.texel_u[cov]

    def sampled_mask(self):
        """Boolean texture-shaped mask of texels hit by at least one pixel."""
        out = np.zeros(self.tex_h * self.tex_w, dtype=bool)
        out[self.texel_ids()] = True
        return out.reshape(self.tex_h, self.tex_w)


class GradField:
    """Texture-shaped gradient plus the mask of texels carrying signal.

    ``touched`` is derived from ``grad``: a texel is touched when any channel
    is nonzero.
    """

    def __init__(self, grad):
        grad = np.asarray(grad, dtype=np.float64)
        if grad.ndim != 3 or grad.shape[2] != 3:
            raise ValueError("gradient must be (H, W, 3)")
        self.grad = grad
        self.touched = np.any(grad != 0.0, axis=2)

    @classmethod
    def zeros(cls, height, width):
        return cls(np.zeros((height, width, 3)))

    @property
    def shape(self):
        return self.grad.shape[:2]

    def touched_ids(self):
        return np.flatnonzero(self.touched)

    def masked(self, mask):
        return GradField(np.where(mask[..., None], self.grad, 0.0))

    def flat(self, mask=None):
        """Gradient over the (optionally masked) texels as one float64 vector."""
        if mask is None:
            return self.grad.reshape(-1)
        return self.grad[mask].reshape(-1)

    def norm(self):
        return float(np.sqrt(np.sum(self.grad * self.grad)))


def _project(mesh, pose):
    right, up, forward = pose.basis()
    rel = mesh.vertices - pose.eye
    x = rel @ right
    y = rel @ up
    z = rel @ forward
    f = pose.focal_px
    valid_v = z > NEAR_PLANE
    zs = np.where(valid_v, z, 1.0)
    sx = 0.5 * pose.image_w + f * x / zs
    sy = 0.5 * pose.image_h - f * y / zs
    return np.stack([sx, sy], axis=1), 1.0 / zs, valid_v


def rasterize(mesh, pose, texture_size):
    """Z-buffered triangle fill recording the source texel of every pixel.

    ``texture_size`` is ``(height, width)`` of the texture the uvs index.
    Faces with a vertex behind the near plane are dropped; depth ties keep
    the lower face index.
    """
    tex_h, tex_w = int(texture_size[0]), int(texture_size[1])
    tu, tv, depth = kernels.rasterize_faces(*face_arrays(mesh, pose),
                                            pose.image_w, pose.image_h, tex_w, tex_h)
    return SampleMap(tu, tv, depth, tex_w, tex_h)


def face_arrays(mesh, pose):
    """Per-face kernel inputs: screen corners, 1/z, uv/z and a validity flag."""
    screen_v, invz_v, valid_v = _project(mesh, pose)
    faces = mesh.faces
    screen = np.ascontiguousarray(screen_v[faces])
    invz = np.ascontiguousarray(invz_v[faces])
    uvz = np.ascontiguousarray(mesh.uvs[mesh.face_uvs] * invz[..., None])
    valid = np.ascontiguousarray(valid_v[faces].all(axis=1).astype(np.uint8))
    return screen, invz, uvz, valid


def shade(samplemap, texture):
    """Nearest-texel lookup; uncovered pixels are black."""
    if (texture.height, texture.width) != (samplemap.tex_h, samplemap.tex_w):
        raise ValueError("texture size differs from the one used to rasterize")
    img = np.zeros(samplemap.shape + (3,))
    cov = samplemap.covered
    img[cov] = texture.rgb[samplemap.texel_v[cov], samplemap.texel_u[cov]]
    return img


def composite(foreground, samplemap, background):
    """Covered pixels from ``foreground``, the rest from ``background``."""
    if foreground.shape != background.shape or foreground.shape[:2] != samplemap.shape:
        raise ValueError(
            f"dimension mismatch: foreground {foreground.shape}, "
            f"background {background.shape}, coverage {samplemap.shape}")
    return np.where(samplemap.covered[..., None], foreground, background)


def backprop_to_texture(grad_image, samplemap):
    """Sum each covered pixel's gradient into its source texel."""
    grad_image = np.asarray(grad_image, dtype=np.float64)
    if grad_image.shape != samplemap.shape + (3,):
        raise ValueError("gradient image does not match the sample map")
    n = samplemap.tex_h * samplemap.tex_w
    ids = samplemap.texel_ids()
    g = grad_image[samplemap.covered]
    out = np.empty((n, 3))
    for c in range(3):
        out[:, c] = np.bincount(ids, weights=g[:, c], minlength=n)
    return GradField(out.reshape(samplemap.tex_h, samplemap.tex_w, 3))


def make_background(spec, width, height):
    """Background image from a spec string.

    ``gradient`` (sky-to-ground ramp), ``gray``, ``flat:r,g,b``, or a path to
    a PPM/PNG image (nearest-resampled to ``width`` x ``height``).
    """
    spec = str(spec)
    if spec == "gradient":
        t = (np.arange(height) + 0.5) / height
        top = np.array([0.55, 0.70, 0.90])
        bottom = np.array([0.30, 0.32, 0.30])
        col = top[None, :] * (1 - t[:, None]) + bottom[None, :] * t[:, None]
        return np.repeat(col[:, None, :], width, axis=1)
    if spec == "gray":
        return np.full((height, width, 3), 0.5)
    if spec.startswith("flat:"):
        rgb = [float(x) for x in spec[5:].split(",")]
        if len(rgb) != 3 or not all(0.0 <= x <= 1.0 for x in rgb):
            raise ValueError(f"bad flat background {spec!r}")
        return np.broadcast_to(np.array(rgb), (height, width, 3)).copy()
    from .imageio import read_image

    img = read_image(spec)
    rows = (np.arange(height) * img.shape[0]) // height
    cols = (np.arange(width) * img.shape[1]) // width
    return img[rows][:, cols].copy()


def brightness_factor(seed, step, view):
    """Seeded global brightness multiplier in [0.7, 1.3] for one view."""
    rng = np.random.default_rng([int(seed), 0xB41, int(step), int(view)])
    return float(rng.uniform(0.7, 1.3))
