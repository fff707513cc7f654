"""Binary PPM (P6) read/write, optional PNG through Pillow, heatmap export."""
from pathlib import Path

import numpy as np

try:
    from PIL import Image as _PILImage
except ImportError:  # PNG support is optional
    _PILImage = None

HAVE_PNG = _PILImage is not None


def to_bytes(img):
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path, img, comment=None):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("PPM export needs an (H, W, 3) image")
    data = img if img.dtype == np.uint8 else to_bytes(img)
    h, w = data.shape[:2]
    header = "P6\n"
    if comment:
        for line in str(comment).splitlines():
            header += f"# {line}\n"
    header += f"{w} {h}\n255\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(data).tobytes())


def _tokens(buf):
    """Yield (token, end offset) from a PNM header, skipping comments."""
    i = 0
    while True:
        while i < len(buf) and buf[i:i + 1].isspace():
            i += 1
        if buf[i:i + 1] == b"#":
            while i < len(buf) and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(buf) and not buf[j:j + 1].isspace():
            j += 1
        yield buf[i:j], j
        i = j


def read_ppm(path):
    buf = Path(path).read_bytes()
    toks = _tokens(buf)
    magic, _ = next(toks)
    if magic != b"P6":
        raise ValueError(f"{path}: not a binary PPM (P6)")
    w, _ = next(toks)
    h, _ = next(toks)
    maxval, end = next(toks)
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PPM supported")
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h * 3, offset=end + 1)
    return data.reshape(h, w, 3).astype(np.float64) / 255.0


def write_png(path, img):
    if not HAVE_PNG:
        raise RuntimeError("PNG export needs Pillow")
    _PILImage.fromarray(to_bytes(img), mode="RGB").save(path)


def read_image(path):
    """Float RGB image from .ppm or .png."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    if path.suffix.lower() == ".ppm":
        return read_ppm(path)
    if path.suffix.lower() == ".png":
        if not HAVE_PNG:
            raise RuntimeError("PNG input needs Pillow")
        with _PILImage.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    raise ValueError(f"unsupported image format: {path.suffix}")


def write_image(path, img):
    path = Path(path)
    if path.suffix.lower() == ".png":
        write_png(path, img)
    else:
        write_ppm(path, img)


def write_heatmaps(prefix, field):
    """One grayscale PPM per channel, affinely mapped min->0, max->255.

    ``field`` is ``(H, W, C)``.  The header comment records the range.
    Returns the written paths.
    """
    field = np.asarray(field, dtype=np.float64)
    paths = []
    for c in range(field.shape[2]):
        ch = field[..., c]
        lo, hi = float(ch.min()), float(ch.max())
        scaled = np.zeros_like(ch) if hi == lo else (ch - lo) / (hi - lo)
        gray = np.repeat(to_bytes(scaled)[..., None], 3, axis=2)
        path = f"{prefix}_c{c}.ppm"
        write_ppm(path, gray, comment=f"min={lo!r} max={hi!r}")
        paths.append(path)
    return paths


def write_mask(path, mask):
    m = np.asarray(mask, dtype=bool)
    write_ppm(path, np.repeat((m * 255).astype(np.uint8)[..., None], 3, axis=2))
