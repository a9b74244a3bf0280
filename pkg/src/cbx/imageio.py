"""Binary PPM (P6) and PGM (P5) encoding for rendered maps and thumbnails."""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch


def encode_ppm(rgb: np.ndarray) -> bytes:
    """8-bit binary PPM from an [H, W, 3] uint8 array."""
    a = np.asarray(rgb)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ShapeMismatch(-1, "[H, W, 3]", tuple(a.shape))
    h, w = a.shape[0], a.shape[1]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + a.astype(np.uint8).tobytes()


def encode_pgm(gray: np.ndarray) -> bytes:
    """8-bit binary PGM from an [H, W] uint8 array."""
    a = np.asarray(gray)
    if a.ndim != 2:
        raise ShapeMismatch(-1, "[H, W]", tuple(a.shape))
    h, w = a.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    return header + a.astype(np.uint8).tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    """Inverse of encode_ppm; accepts only the exact header layout we write."""
    if not data.startswith(b"P6\n"):
        raise ValueError("not a binary PPM")
    rest = data[3:]
    dims, rest = rest.split(b"\n", 1)
    maxval, raster = rest.split(b"\n", 1)
    w, h = (int(t) for t in dims.split())
    if maxval != b"255":
        raise ValueError("unsupported max value")
    arr = np.frombuffer(raster, dtype=np.uint8, count=h * w * 3)
    return arr.reshape(h, w, 3)


def image_to_rgb8(image: np.ndarray) -> np.ndarray:
    """[3, H, W] floats in [0, 1] to [H, W, 3] uint8."""
    a = np.asarray(image, dtype=np.float64)
    if a.ndim != 3 or a.shape[0] != 3:
        raise ShapeMismatch(-1, "[3, H, W]", tuple(a.shape))
    scaled = np.floor(np.clip(a, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    return np.moveaxis(scaled, 0, 2)
