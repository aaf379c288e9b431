"""Serialization helpers for the HTTP wire protocol (version 1).

Payload conventions, shared by the client here and any server
implementation: images and masks travel as base64 PNG (masks 8-bit
single-channel, nonzero = foreground); feature tensors travel as base64
of row-major little-endian 32-bit floats; every request carries
"protocol": 1.
"""
from __future__ import annotations

import base64
import binascii
import io

import numpy as np
from PIL import Image

from ..exceptions import PayloadShapeError, ProtocolError
from ..grids import ImageRGB, MaskGrid

__all__ = [
    "PROTOCOL_VERSION",
    "decode_b64",
    "image_to_png_b64",
    "png_b64_to_image",
    "mask_to_png_b64",
    "png_b64_to_mask",
    "floats_to_b64",
    "b64_to_floats",
]

PROTOCOL_VERSION = 1


def decode_b64(payload: str, what: str = "payload") -> bytes:
    if not isinstance(payload, str):
        raise ProtocolError(f"{what} must be a base64 string")
    try:
        return base64.b64decode(payload.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError, ValueError) as exc:
        raise ProtocolError(f"{what} is not valid base64: {exc}") from exc


def image_to_png_b64(image: ImageRGB) -> str:
    buf = io.BytesIO()
    Image.fromarray(image.data, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def png_b64_to_image(payload: str) -> ImageRGB:
    raw = decode_b64(payload, "image PNG")
    try:
        with Image.open(io.BytesIO(raw)) as img:
            return ImageRGB(np.asarray(img.convert("RGB")))
    except ProtocolError:
        raise
    except Exception as exc:
        raise ProtocolError(f"image payload is not decodable PNG: {exc}") from exc


def mask_to_png_b64(mask: MaskGrid) -> str:
    buf = io.BytesIO()
    Image.fromarray(mask.data * np.uint8(255), mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def png_b64_to_mask(payload: str, expect_shape: tuple[int, int] | None = None) -> MaskGrid:
    raw = decode_b64(payload, "mask PNG")
    try:
        with Image.open(io.BytesIO(raw)) as img:
            arr = np.asarray(img.convert("L"))
    except Exception as exc:
        raise ProtocolError(f"mask payload is not decodable PNG: {exc}") from exc
    if expect_shape is not None and arr.shape != expect_shape:
        raise PayloadShapeError(
            f"mask shape {arr.shape} does not match expected {expect_shape}"
        )
    return MaskGrid((arr != 0).astype(np.uint8))


def floats_to_b64(a: np.ndarray) -> str:
    flat = np.ascontiguousarray(np.asarray(a, dtype="<f4"))
    return base64.b64encode(flat.tobytes()).decode("ascii")


def b64_to_floats(payload: str, count: int, what: str = "tensor") -> np.ndarray:
    raw = decode_b64(payload, what)
    if len(raw) != 4 * count:
        raise PayloadShapeError(
            f"{what}: expected {count} float32 values ({4 * count} bytes), "
            f"got {len(raw)} bytes"
        )
    values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    if not np.isfinite(values).all():
        raise PayloadShapeError(f"{what} contains non-finite values")
    return values
