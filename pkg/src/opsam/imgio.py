"""File I/O for images, masks, and prior grids.

Images load from PNG or JPEG; masks load from single-channel images
with nonzero meaning foreground and save as 0/255 PNG. Priors dump to
binary PGM (P5, maxval 255) for quick inspection with any image viewer;
the byte layout is fixed so dumps are diffable across runs.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import ConfigError
from .grids import ImageRGB, MaskGrid, Prior

__all__ = [
    "load_image",
    "load_mask",
    "save_image_png",
    "save_mask_png",
    "prior_to_pgm",
    "save_prior_pgm",
    "load_prior_pgm",
]


def load_image(path: str | Path) -> ImageRGB:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"image file not found: {path}")
    try:
        with Image.open(path) as img:
            return ImageRGB(np.asarray(img.convert("RGB")))
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"cannot read image {path}: {exc}") from exc


def load_mask(path: str | Path) -> MaskGrid:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"mask file not found: {path}")
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"))
    except Exception as exc:
        raise ConfigError(f"cannot read mask {path}: {exc}") from exc
    return MaskGrid((arr != 0).astype(np.uint8))


def save_image_png(path: str | Path, image: ImageRGB) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image.data, mode="RGB").save(path, format="PNG")


def save_mask_png(path: str | Path, mask: MaskGrid) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.data * np.uint8(255), mode="L").save(path, format="PNG")


def prior_to_pgm(prior: Prior) -> bytes:
    """Binary PGM: header 'P5\\n<w> <h>\\n255\\n' then one byte per cell,
    value = round(p * 255) with halves up."""
    levels = np.floor(prior.data * 255.0 + 0.5).astype(np.uint8)
    header = f"P5\n{prior.w} {prior.h}\n255\n".encode("ascii")
    return header + levels.tobytes()


def save_prior_pgm(path: str | Path, prior: Prior) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(prior_to_pgm(prior))


def load_prior_pgm(path: str | Path) -> Prior:
    """Inverse of save_prior_pgm (quantized to 1/255 steps)."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise ConfigError(f"not a maxval-255 binary PGM: {path}")
    try:
        w, h = (int(tok) for tok in parts[1].split())
    except ValueError as exc:
        raise ConfigError(f"bad PGM dimensions in {path}") from exc
    body = parts[3]
    if len(body) != h * w:
        raise ConfigError(f"PGM body length {len(body)} != {h}x{w}")
    grid = np.frombuffer(body, dtype=np.uint8).reshape(h, w).astype(np.float64) / 255.0
    return Prior(grid)
