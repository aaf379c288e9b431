"""Model backends behind the HTTP endpoints.

Two deterministic stubs keep the server fully testable offline: the
encoder projects per-patch color statistics through fixed per-kind
matrices, and the segmenter grows a flat-color region from each prompt.
Real foundation models live in `real` and are loaded lazily by id.
"""
from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

STUB_ID = "stub"

# max per-channel distance for two pixels to count as the same region
# in the stub segmenter
STUB_COLOR_TOL = 12


@dataclass(frozen=True)
class ServerConfig:
    """What to serve and where; capabilities are read back from the
    loaded models, so these sizes must be ones the models accept."""

    encoder_model: str = STUB_ID
    segmenter_model: str = STUB_ID
    device: str = "cpu"
    host: str = "127.0.0.1"
    port: int = 9000
    encoder_input: int = 560
    segmenter_input: int = 1024

    def __post_init__(self) -> None:
        if self.encoder_input < 16 or self.segmenter_input < 16:
            raise ValueError("input sizes must be at least 16 pixels")
        if not (0 < self.port < 65536):
            raise ValueError(f"port out of range: {self.port}")


class EncoderModel(Protocol):
    name: str
    patch: int
    input_size: int
    dim: int
    kinds: tuple[str, ...]
    value_embedding: str

    def embed(self, image: np.ndarray, kinds: Sequence[str]) -> dict[str, np.ndarray]:
        """Per-patch embeddings, one (h*w, dim) float array per kind."""
        ...


class SegmenterModel(Protocol):
    name: str
    input_size: int

    def predict(
        self, image: np.ndarray, points: Sequence[tuple[int, int]], labels: Sequence[int]
    ) -> tuple[np.ndarray, float, int]:
        """Boolean mask at image resolution, the model's own quality
        estimate, and the index of the candidate that was chosen."""
        ...


def _kind_matrix(kind: str, dim: int) -> np.ndarray:
    """Fixed projection from the 6 color statistics to `dim` features,
    different per embedding kind but identical across processes."""
    digest = hashlib.blake2b(kind.encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return rng.standard_normal((6, dim))


class StubEncoder:
    """Color-statistics encoder: mean and mean-square RGB per patch,
    pushed through a fixed per-kind projection. Pure function of the
    image bytes, so repeated encodes are byte-identical."""

    value_embedding = "pre-projection"

    def __init__(self, input_size: int, dim: int = 16, patch: int = 16) -> None:
        if input_size % patch != 0:
            raise ValueError(f"input size {input_size} is not a multiple of patch {patch}")
        if dim < 4:
            raise ValueError(f"dim must be >= 4, got {dim}")
        self.name = STUB_ID
        self.patch = patch
        self.input_size = input_size
        self.dim = dim
        self.kinds = ("value", "query", "key", "feats")
        self._proj = {k: _kind_matrix(k, dim) for k in self.kinds}

    def embed(self, image: np.ndarray, kinds: Sequence[str]) -> dict[str, np.ndarray]:
        side = self.input_size // self.patch
        img = image.astype(np.float64) / 255.0
        cells = img.reshape(side, self.patch, side, self.patch, 3)
        mean = cells.mean(axis=(1, 3)).reshape(side * side, 3)
        stats = np.concatenate([mean, mean * mean], axis=1)
        return {k: stats @ self._proj[k] for k in kinds}


def _flat_region(image: np.ndarray, seed: tuple[int, int]) -> np.ndarray:
    """4-connected region of pixels whose color stays within
    STUB_COLOR_TOL per channel of the seed pixel."""
    h, w = image.shape[:2]
    ref = image[seed].astype(np.int32)
    close = (np.abs(image.astype(np.int32) - ref).max(axis=2) <= STUB_COLOR_TOL)
    region = np.zeros((h, w), dtype=bool)
    if not close[seed]:
        return region
    queue = deque([seed])
    region[seed] = True
    while queue:
        y, x = queue.popleft()
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if 0 <= ny < h and 0 <= nx < w and close[ny, nx] and not region[ny, nx]:
                region[ny, nx] = True
                queue.append((ny, nx))
    return region


class StubSegmenter:
    """Flat-color region grower. Positive prompts add the region around
    their pixel, negative prompts carve out the region around theirs.
    The quality estimate is a fixed confident value for nonempty masks,
    which is exactly what the prompting loop needs to terminate."""

    def __init__(self, input_size: int) -> None:
        self.name = STUB_ID
        self.input_size = input_size

    def predict(
        self, image: np.ndarray, points: Sequence[tuple[int, int]], labels: Sequence[int]
    ) -> tuple[np.ndarray, float, int]:
        mask = np.zeros(image.shape[:2], dtype=bool)
        for (x, y), label in zip(points, labels):
            if label == 1:
                mask |= _flat_region(image, (y, x))
        for (x, y), label in zip(points, labels):
            if label == 0:
                mask &= ~_flat_region(image, (y, x))
        return mask, 0.9 if mask.any() else 0.0, 0


def load_models(config: ServerConfig) -> tuple[EncoderModel, SegmenterModel]:
    if config.encoder_model == STUB_ID:
        encoder: EncoderModel = StubEncoder(config.encoder_input)
    else:
        from .real import Dinov2Encoder

        encoder = Dinov2Encoder(config.encoder_model, config.device, config.encoder_input)
    if config.segmenter_model == STUB_ID:
        segmenter: SegmenterModel = StubSegmenter(config.segmenter_input)
    else:
        from .real import Sam2Segmenter

        segmenter = Sam2Segmenter(config.segmenter_model, config.device, config.segmenter_input)
    return encoder, segmenter
