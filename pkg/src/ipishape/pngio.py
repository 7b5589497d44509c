"""PNG readers/writers for masks (8-bit) and speckle images (16-bit).

Speckle images are stored as 16-bit grayscale after scaling the image peak
to 65535; the exact scale factor is recorded in the dataset manifest so the
stored integers invert back to floats with at most one quantum of error.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image


def mask_to_png_bytes(mask: np.ndarray) -> bytes:
    """Encode a {0,1} mask as an 8-bit grayscale PNG with values {0, 255}."""
    img = Image.fromarray((mask != 0).astype(np.uint8) * 255, mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def write_mask_png(path: str | Path, mask: np.ndarray) -> None:
    Path(path).write_bytes(mask_to_png_bytes(mask))


def read_mask_png(path: str | Path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("L"))
    return (arr >= 128).astype(np.uint8)


def speckle_scale(img: np.ndarray) -> float:
    """Scale factor mapping the image peak to 65535 (1.0 for an empty image)."""
    peak = float(img.max())
    return 65535.0 / peak if peak > 0 else 1.0


def speckle_to_png_bytes(img: np.ndarray, scale: float) -> bytes:
    """Encode a nonnegative float image as 16-bit grayscale at the given scale."""
    arr = np.rint(np.asarray(img, dtype=np.float64) * scale)
    arr = np.clip(arr, 0, 65535).astype(np.uint16)
    pil = Image.fromarray(arr, mode="I;16")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def write_speckle_png(path: str | Path, img: np.ndarray, scale: float) -> None:
    Path(path).write_bytes(speckle_to_png_bytes(img, scale))


def read_speckle_png(path: str | Path, scale: float) -> np.ndarray:
    """Decode a 16-bit speckle PNG and invert the recorded scale factor."""
    arr = np.asarray(Image.open(path), dtype=np.uint16)
    return arr.astype(np.float64) / scale


def write_gray_png(path: str | Path, arr_u8: np.ndarray) -> None:
    """Plain 8-bit grayscale export (difference images, previews)."""
    Image.fromarray(arr_u8.astype(np.uint8), mode="L").save(path, format="PNG")
