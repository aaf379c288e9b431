"""Wire protocol version 1: request/response schemas and payload codecs.

Every body is JSON with a "protocol" field pinned to 1. Images and masks
travel as base64 PNG; embeddings as base64 of row-major little-endian
float32. Prompt coordinates live in the letterboxed model frame, which
is the client's responsibility to produce.
"""
from __future__ import annotations

import base64
import binascii
import io
from typing import Literal

import numpy as np
from PIL import Image
from pydantic import BaseModel, Field

PROTOCOL_VERSION = 1


class PromptModel(BaseModel):
    x: int = Field(ge=0)
    y: int = Field(ge=0)
    label: Literal[0, 1]


class EncodeRequest(BaseModel):
    protocol: Literal[1]
    image_png_b64: str
    embedding_kinds: list[str] = Field(min_length=1)


class SegmentRequest(BaseModel):
    protocol: Literal[1]
    session_id: str = Field(min_length=1)
    prompts: list[PromptModel] = Field(min_length=1)
    image_png_b64: str | None = None


class EchoRequest(BaseModel):
    protocol: Literal[1]
    payload_b64: str


class CapabilitiesResponse(BaseModel):
    protocol: Literal[1] = PROTOCOL_VERSION
    patch: int
    input_size: int
    d: int
    kinds: list[str]
    segmenter_input: int
    encoder_model: str
    segmenter_model: str
    value_embedding: str


class SegmentResponse(BaseModel):
    protocol: Literal[1] = PROTOCOL_VERSION
    mask_png_b64: str
    predicted_iou: float
    # which of the model's candidate masks was returned (0 when the
    # model produces a single mask)
    chosen_candidate: int


def b64_to_image(data: str) -> np.ndarray:
    """Decode a base64 PNG into an (h, w, 3) uint8 array."""
    if not isinstance(data, str):
        raise ValueError("image payload must be a base64 string")
    try:
        raw = base64.b64decode(data, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ValueError(f"invalid base64 image payload: {exc}") from exc
    try:
        with Image.open(io.BytesIO(raw)) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise ValueError(f"payload is not a decodable PNG: {exc}") from exc


def mask_to_b64(mask: np.ndarray) -> str:
    """Encode a boolean mask as a base64 single-channel PNG (255 = object)."""
    arr = (np.asarray(mask).astype(bool) * np.uint8(255))
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def floats_to_b64(values: np.ndarray) -> str:
    """Base64 of little-endian float32 bytes, row-major."""
    return base64.b64encode(
        np.ascontiguousarray(values, dtype="<f4").tobytes()
    ).decode("ascii")
