"""Mesh loading and camera pose generation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "ObjParseError",
    "Mesh",
    "CameraPose",
    "PoseGrid",
    "load_obj",
    "bundled_car_path",
    "make_pose",
    "pose_grid",
    "sample_minibatch",
]


class ObjParseError(ValueError):
    """Malformed or unsupported record in an OBJ file."""

    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh with a per-corner UV index.

    ``faces`` is ``(F, 3)`` into ``vertices`` and ``face_uvs`` is ``(F, 3)``
    into ``uvs``.
    """

    vertices: np.ndarray
    uvs: np.ndarray
    faces: np.ndarray
    face_uvs: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        t = np.ascontiguousarray(self.uvs, dtype=np.float64)
        f = np.ascontiguousarray(self.faces, dtype=np.int64)
        ft = np.ascontiguousarray(self.face_uvs, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must be (N, 3)")
        if t.ndim != 2 or t.shape[1] != 2:
            raise ValueError("uvs must be (M, 2)")
        if f.ndim != 2 or f.shape[1] != 3 or f.shape != ft.shape:
            raise ValueError("faces and face_uvs must both be (F, 3)")
        if len(f) < 1:
            raise ValueError("mesh needs at least one face")
        if f.min() < 0 or f.max() >= len(v):
            raise ValueError("face vertex index out of range")
        if ft.min() < 0 or ft.max() >= len(t):
            raise ValueError("face uv index out of range")
        if t.size and (t.min() < 0.0 or t.max() > 1.0):
            raise ValueError("uv coordinates must lie in [0, 1]")
        for name, arr in (("vertices", v), ("uvs", t), ("faces", f), ("face_uvs", ft)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_faces(self):
        return len(self.faces)

    def centered(self):
        """Copy translated so the bounding-box center sits at the origin."""
        center = 0.5 * (self.vertices.min(axis=0) + self.vertices.max(axis=0))
        return Mesh(self.vertices - center, self.uvs, self.faces, self.face_uvs)


def _resolve_index(token, count, lineno, kind):
    try:
        idx = int(token)
    except ValueError:
        raise ObjParseError(lineno, f"bad {kind} index {token!r}") from None
    if idx < 0:
        idx += count
    else:
        idx -= 1
    if not 0 <= idx < count:
        raise ObjParseError(lineno, f"face references {kind} index {token} of {count}")
    return idx


def load_obj(path, center=True):
    """Read the v/vt/f subset of Wavefront OBJ.

    Polygons are fan-triangulated.  Every face corner must carry a uv index.
    With ``center`` the mesh is shifted so its bounding box is centered on
    the origin.
    """
    vertices, uvs, faces, face_uvs = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tag, *rest = line.split()
            if tag == "v":
                if len(rest) < 3:
                    raise ObjParseError(lineno, "vertex needs 3 coordinates")
                try:
                    vertices.append([float(x) for x in rest[:3]])
                except ValueError:
                    raise ObjParseError(lineno, "non-numeric vertex coordinate") from None
            elif tag == "vt":
                if len(rest) < 2:
                    raise ObjParseError(lineno, "texture coordinate needs 2 values")
                try:
                    uvs.append([float(x) for x in rest[:2]])
                except ValueError:
                    raise ObjParseError(lineno, "non-numeric texture coordinate") from None
            elif tag == "f":
                if len(rest) < 3:
                    raise ObjParseError(lineno, "face needs at least 3 corners")
                corners = []
                for tok in rest:
                    parts = tok.split("/")
                    if len(parts) < 2 or not parts[1]:
                        raise ObjParseError(lineno, f"face corner {tok!r} lacks a uv index")
                    vi = _resolve_index(parts[0], len(vertices), lineno, "vertex")
                    ti = _resolve_index(parts[1], len(uvs), lineno, "uv")
                    corners.append((vi, ti))
                for a, b in zip(corners[1:-1], corners[2:]):
                    tri = (corners[0], a, b)
                    faces.append([c[0] for c in tri])
                    face_uvs.append([c[1] for c in tri])
            # normals, groups, materials and smoothing records are ignored
    if not faces:
        raise ObjParseError(0, "no faces found")
    uv_arr = np.asarray(uvs, dtype=np.float64)
    if uv_arr.min() < 0.0 or uv_arr.max() > 1.0:
        raise ObjParseError(0, "uv coordinates outside [0, 1]")
    mesh = Mesh(np.asarray(vertices, dtype=np.float64), uv_arr,
                np.asarray(faces), np.asarray(face_uvs))
    return mesh.centered() if center else mesh


def bundled_car_path():
    return Path(str(resources.files("texcamo") / "data" / "car.obj"))


@dataclass(frozen=True)
class CameraPose:
    azimuth_deg: float
    elevation_deg: float
    distance_m: float
    fov_deg: float = 60.0
    image_w: int = 256
    image_h: int = 256

    def __post_init__(self):
        if not (self.distance_m > 0 and math.isfinite(self.distance_m)):
            raise ValueError(f"distance_m must be positive, got {self.distance_m}")
        if not 0.0 <= self.elevation_deg <= 90.0:
            raise ValueError(f"elevation_deg must be in [0, 90], got {self.elevation_deg}")
        if not 0.0 <= self.azimuth_deg < 360.0:
            raise ValueError(f"azimuth_deg must be in [0, 360), got {self.azimuth_deg}")
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError(f"fov_deg must be in (0, 180), got {self.fov_deg}")
        if self.image_w < 16 or self.image_h < 16:
            raise ValueError("image dimensions must be at least 16")

    @property
    def eye(self):
        az = math.radians(self.azimuth_deg)
        el = math.radians(self.elevation_deg)
        d = self.distance_m
        return np.array([d * math.cos(el) * math.cos(az),
                         d * math.cos(el) * math.sin(az),
                         d * math.sin(el)])

    def basis(self):
        """Camera (right, up, forward) unit vectors in world space."""
        eye = self.eye
        forward = -eye / np.linalg.norm(eye)
        up = np.array([0.0, 0.0, 1.0])
        right = np.cross(forward, up)
        if np.linalg.norm(right) < 1e-9:
            # looking straight down: world-Z is parallel to the view axis
            up = np.array([1.0, 0.0, 0.0])
            right = np.cross(forward, up)
        right /= np.linalg.norm(right)
        true_up = np.cross(right, forward)
        return right, true_up, forward

    @property
    def focal_px(self):
        return 0.5 * self.image_w / math.tan(math.radians(self.fov_deg) / 2)


def make_pose(azimuth_deg, elevation_deg, distance_m, fov_deg=60.0, image_w=256, image_h=256):
    return CameraPose(float(azimuth_deg) % 360.0, float(elevation_deg), float(distance_m),
                      float(fov_deg), int(image_w), int(image_h))


@dataclass(frozen=True)
class PoseGrid:
    elevations: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 30.0, 45.0, 60.0)
    azimuth_step_deg: float = 2.0
    distances: tuple = (10.0,)
    azimuth_offset_deg: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "elevations", tuple(float(e) for e in self.elevations))
        object.__setattr__(self, "distances", tuple(float(d) for d in self.distances))
        step = float(self.azimuth_step_deg)
        if step <= 0 or abs(360.0 / step - round(360.0 / step)) > 1e-9:
            raise ValueError(f"azimuth_step_deg must divide 360, got {step}")
        if not self.distances or any(d <= 0 for d in self.distances):
            raise ValueError("distances must be nonempty and positive")
        if not self.elevations:
            raise ValueError("elevations must be nonempty")

    @property
    def azimuths(self):
        n = int(round(360.0 / self.azimuth_step_deg))
        return [(self.azimuth_offset_deg + i * self.azimuth_step_deg) % 360.0 for i in range(n)]

    def __len__(self):
        return len(self.elevations) * len(self.azimuths) * len(self.distances)


def pose_grid(grid, fov_deg=60.0, image_w=256, image_h=256):
    """All poses of ``grid``, distance-major, then elevation, then azimuth."""
    azimuths = grid.azimuths
    return [make_pose(az, el, d, fov_deg, image_w, image_h)
            for d in grid.distances for el in grid.elevations for az in azimuths]


def sample_minibatch(poses, k, rng):
    """Draw ``k`` distinct poses uniformly; ``rng`` is a seed or a numpy Generator."""
    if not 1 <= k <= len(poses):
        raise ValueError(f"cannot draw {k} poses from {len(poses)}")
    rng = np.random.default_rng(rng)
    idx = rng.permutation(len(poses))[:k]
    return [poses[i] for i in idx]
