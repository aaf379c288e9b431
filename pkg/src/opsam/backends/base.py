"""Backend interfaces.

An encoder turns an image into per-patch embeddings of one or more
kinds and owns the geometry between pixel space and its patch grid
(needed because remote encoders letterbox to a fixed input size). A
segmenter opens a per-image session that maps point-prompt lists to
masks. Both contracts are deterministic: the same inputs must produce
identical outputs on every call.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..grids import FeatureMap, ImageRGB, MaskGrid, Prior, resize_mask_to_patches, upsample_nearest
from ..prompting import PromptPoint


@dataclass(frozen=True)
class EncoderInfo:
    """Capability descriptor an encoder advertises."""

    name: str
    patch: int
    input_size: int | None  # fixed square input side, or None for native size
    dim: int
    kinds: tuple[str, ...]
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.patch < 1 or self.dim < 1:
            raise ValueError("patch and dim must be >= 1")
        if not self.kinds:
            raise ValueError("an encoder must advertise at least one embedding kind")


@dataclass(frozen=True)
class SegmenterResult:
    mask: MaskGrid
    predicted_iou: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.predicted_iou <= 1.0):
            raise ValueError(f"predicted_iou must lie in [0, 1], got {self.predicted_iou}")


class EncoderBackend(ABC):
    """Feature extractor with deterministic outputs and known geometry."""

    @abstractmethod
    def info(self) -> EncoderInfo:
        ...

    @abstractmethod
    def grid_for(self, height: int, width: int) -> tuple[int, int]:
        """Patch grid (h, w) the encoder produces for an input this size."""

    @abstractmethod
    def encode(
        self, image: ImageRGB, kinds: Sequence[str] | None = None
    ) -> dict[str, FeatureMap]:
        """Per-patch embeddings keyed by kind; must cover `kinds` when given."""

    def pool_mask(self, mask: MaskGrid) -> Prior:
        """Project a pixel mask onto this encoder's patch grid for the
        same image size (fractional area pooling)."""
        h, w = self.grid_for(mask.height, mask.width)
        return resize_mask_to_patches(mask, h, w)

    def prior_to_pixels(self, prior: Prior, height: int, width: int) -> np.ndarray:
        """Lift a patch-grid prior back to pixel resolution (float grid)."""
        return upsample_nearest(prior, height, width)


class SegmenterSession(ABC):
    """Per-image handle; prompt lists map deterministically to masks."""

    @abstractmethod
    def segment(self, prompts: Sequence[PromptPoint]) -> SegmenterResult:
        ...

    def close(self) -> None:
        pass


class SegmenterBackend(ABC):
    @abstractmethod
    def open(self, image: ImageRGB) -> SegmenterSession:
        ...
