"""Shared fixtures: a stub-model app sized for fast tests, payload
helpers, and a flat-color scene generator."""
import base64
import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from opsam_server.app import create_app
from opsam_server.models import ServerConfig

BACKGROUND = (70, 75, 80)
OBJECT = (190, 60, 60)


@pytest.fixture()
def client():
    config = ServerConfig(encoder_input=64, segmenter_input=64)
    return TestClient(create_app(config), raise_server_exceptions=False)


def png_b64(array: np.ndarray) -> str:
    mode = "RGB" if array.ndim == 3 else "L"
    buf = io.BytesIO()
    Image.fromarray(array.astype(np.uint8), mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def b64_png_to_array(data: str) -> np.ndarray:
    raw = base64.b64decode(data)
    with Image.open(io.BytesIO(raw)) as img:
        return np.asarray(img)


def b64_to_f32(data: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(data), dtype="<f4")


def flat_scene(box, size=64):
    """Solid-color object on a solid background; returns (image, mask)."""
    y0, y1, x0, x1 = box
    image = np.empty((size, size, 3), np.uint8)
    image[:] = BACKGROUND
    image[y0:y1, x0:x1] = OBJECT
    mask = np.zeros((size, size), np.uint8)
    mask[y0:y1, x0:x1] = 1
    return image, mask
