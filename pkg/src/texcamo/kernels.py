"""Backend selection for the hot loops.

The Cython extension is used when it has been built; otherwise the
pure-Python twin is imported.  Set ``TEXCAMO_PURE_PYTHON=1`` to force the
fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("TEXCAMO_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not compiled
        _impl = _pykernels
else:
    _impl = _pykernels

rasterize_faces = _impl.rasterize_faces
kd_nearest = _impl.kd_nearest

__all__ = ["BACKEND", "rasterize_faces", "kd_nearest"]
