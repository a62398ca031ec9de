"""
render/imageio.py — PPM (8-bit RGB) and PGM (16-bit gray) through Pillow

Float images live in [0, 1] and are quantized with rounding, so
read(write(x)) differs from x by at most 1/510 per channel.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from marrprobe.exceptions import ArtifactIOError, ContractError

logger = logging.getLogger(__name__)

PGM_MAX = 65535
# relative slack for float32 values that sit on a band edge
BAND_TOLERANCE = 1e-6


def _prepare(path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ArtifactIOError(path, f"cannot create directory ({exc.strerror})") from exc
    return path


def _save(image: Image.Image, path: Path) -> None:
    try:
        image.save(path, format="PPM")
    except OSError as exc:
        raise ArtifactIOError(path, f"cannot write image ({exc})") from exc


def _open(path) -> Image.Image:
    path = Path(path)
    try:
        with Image.open(path) as image:
            image.load()
            return image
    except FileNotFoundError as exc:
        raise ArtifactIOError(path, "file not found") from exc
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ArtifactIOError(path, f"unreadable image ({exc})") from exc


def write_ppm(path, rgb) -> Path:
    """rgb [H, W, 3] floats in [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[-1] != 3:
        raise ArtifactIOError(path, f"expected an [H, W, 3] image, got shape {list(rgb.shape)}")
    path = _prepare(path)
    data = np.rint(np.clip(np.nan_to_num(rgb, nan=0.0), 0.0, 1.0) * 255).astype(np.uint8)
    _save(Image.fromarray(data), path)
    return path


def read_ppm(path) -> np.ndarray:
    image = _open(path)
    if image.mode != "RGB":
        image = image.convert("RGB")
    return np.asarray(image, dtype=np.float64) / 255.0


def write_pgm16(path, values) -> Path:
    """values [H, W] integers in [0, 65535]."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ArtifactIOError(path, f"expected an [H, W] map, got shape {list(values.shape)}")
    path = _prepare(path)
    data = np.clip(values, 0, PGM_MAX).astype(np.int32)
    _save(Image.fromarray(data), path)
    return path


def read_pgm16(path) -> np.ndarray:
    image = _open(path)
    return np.asarray(image, dtype=np.int64)


def write_unit_pgm(path, values) -> Path:
    """values [H, W] floats in [0, 1] stored at 16-bit resolution."""
    values = np.clip(np.nan_to_num(np.asarray(values, dtype=np.float64)), 0.0, 1.0)
    return write_pgm16(path, np.rint(values * PGM_MAX))


def write_depth_pgm(path, depth, depth_range) -> Path:
    """Depth normalized over [d_min, d_max] into 16 bits.

    NaN marks "no surface" and is stored as 0. Finite values outside the range
    raise ContractError instead of saturating.
    """
    d_min, d_max = depth_range
    unit = (np.asarray(depth, dtype=np.float64) - d_min) / (d_max - d_min)
    finite = unit[np.isfinite(unit)]
    if finite.size and (finite.min() < -BAND_TOLERANCE or finite.max() > 1 + BAND_TOLERANCE):
        raise ContractError(
            f"{path}: depth spans [{d_min + finite.min() * (d_max - d_min):.4f}, "
            f"{d_min + finite.max() * (d_max - d_min):.4f}], outside the stored range [{d_min}, {d_max}]"
        )
    return write_unit_pgm(path, unit)


def read_depth_pgm(path, depth_range) -> np.ndarray:
    d_min, d_max = depth_range
    return d_min + read_pgm16(path) / PGM_MAX * (d_max - d_min)


def write_mask_pgm(path, mask) -> Path:
    """0/1 mask, stored as the values 0 and 1."""
    return write_pgm16(path, (np.asarray(mask) > 0).astype(np.int32))
