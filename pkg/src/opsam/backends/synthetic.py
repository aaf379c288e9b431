"""Deterministic synthetic scenes and a class-conditional toy encoder.

Scenes are 96x96 images of one or two reddish blob regions on a
greenish background, with Gaussian pixel noise. Blob outlines are
random wobbling ellipses drawn in patch-cell space and rendered as 8x8
pixel blocks, so region boundaries coincide with the encoder's patch
grid: pooled masks and thresholded priors then represent the region
exactly, and closed-loop tests exercise the prompting logic rather
than pooling quantization. The encoder classifies each 8x8 patch by
pixel-color majority and emits that class's fixed unit prototype plus
seeded Gaussian noise, so correlation behavior is controllable: zero
noise gives exactly block-constant correlations, and small noise gives
cleanly separable priors. The four embedding kinds blend the class
signal toward one shared fixed direction at kind-specific strength, so
switching kinds degrades class separation in a known order (value
best, then feats, query, key) by construction.

Everything is reproducible: scenes from their seed, features from the
image bytes plus the encoder seed.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from ..grids import FeatureMap, ImageRGB, MaskGrid
from .base import EncoderBackend, EncoderInfo

__all__ = ["SyntheticScene", "make_scene", "SyntheticEncoder", "classify_pixels"]

SCENE_SIZE = 96
PATCH = 8
POLYP_RGB = (192, 80, 70)
BACKGROUND_RGB = (88, 108, 98)
PIXEL_NOISE_SIGMA = 8.0

# Blend strength toward the shared off-class direction; higher = less
# separable. One direction for all kinds keeps the degradation ordered.
KIND_MIX = (("value", 0.0), ("feats", 0.15), ("query", 0.4), ("key", 0.5))


@dataclass(frozen=True)
class SyntheticScene:
    seed: int
    image: ImageRGB
    gt_mask: MaskGrid

    def __post_init__(self) -> None:
        if self.image.data.shape[:2] != self.gt_mask.data.shape:
            raise ValueError("scene image and mask shapes differ")
        if self.gt_mask.area == 0:
            raise ValueError("scene ground truth must be nonempty")


def classify_pixels(data: np.ndarray) -> np.ndarray:
    """Boolean per-pixel object test: red clearly dominates green.

    The blob/background palettes differ in R-G by ~130 while the pixel
    noise is sigma 8 per channel, so the margin of 40 misclassifies a
    pixel only at ~5 sigma.
    """
    rgb = data.astype(np.int32)
    return rgb[..., 0] > rgb[..., 1] + 40


def _blob_cells(
    rng: np.random.Generator, cells: int, radius_range: tuple[float, float]
) -> np.ndarray:
    """One random blob on the patch-cell grid, boolean (cells, cells).

    A wobbling ellipse is evaluated at cell centers; a cell belongs to
    the blob when its center falls inside the contour. Resamples until
    the selected cells form a single nonempty 4-connected component, so
    one call always yields one region.
    """
    four = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    for _ in range(200):
        cy = rng.uniform(0.28, 0.72) * cells
        cx = rng.uniform(0.28, 0.72) * cells
        base = rng.uniform(*radius_range)
        aspect = rng.uniform(0.82, 1.22)
        ry, rx = base * aspect, base / aspect
        lobes = int(rng.integers(2, 4))
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp = rng.uniform(0.04, 0.12)
        yy, xx = np.mgrid[0:cells, 0:cells]
        dy = (yy + 0.5 - cy) / ry
        dx = (xx + 0.5 - cx) / rx
        ang = np.arctan2(dy, dx)
        blob = np.sqrt(dy * dy + dx * dx) <= 1.0 + amp * np.sin(lobes * ang + phase)
        if blob.any() and ndimage.label(blob, structure=four)[1] == 1:
            return blob
    raise RuntimeError("could not draw a connected blob")


def make_scene(seed: int, blobs: int = 1, size: int = SCENE_SIZE) -> SyntheticScene:
    """Generate a reproducible scene with `blobs` well-separated regions.

    Regions are unions of whole 8x8 patch cells. For two-blob scenes the
    second blob is resampled until at least one empty cell separates the
    two everywhere, so the ground truth has exactly `blobs` 4-connected
    components with a clean gap between them.
    """
    if blobs not in (1, 2):
        raise ValueError(f"blobs must be 1 or 2, got {blobs}")
    if size < 4 * PATCH or size % PATCH:
        raise ValueError(f"scene size must be a multiple of {PATCH}, at least {4 * PATCH}")
    rng = np.random.default_rng(seed)
    cells = size // PATCH
    scale = cells / (SCENE_SIZE // PATCH)
    radius_range = (1.9 * scale, 3.1 * scale) if blobs == 1 else (1.0 * scale, 1.6 * scale)
    grid = _blob_cells(rng, cells, radius_range)
    if blobs == 2:
        for _ in range(200):
            second = _blob_cells(rng, cells, radius_range)
            room = ~ndimage.binary_dilation(grid, structure=np.ones((3, 3)))
            if not (second & ~room).any():
                grid = grid | second
                break
            grid = _blob_cells(rng, cells, radius_range)
        else:
            raise RuntimeError(f"could not place a second blob for seed {seed}")
    mask = np.kron(grid, np.ones((PATCH, PATCH), dtype=bool))
    colors = np.where(
        mask[..., None],
        np.array(POLYP_RGB, dtype=np.float64),
        np.array(BACKGROUND_RGB, dtype=np.float64),
    )
    noisy = colors + rng.normal(0.0, PIXEL_NOISE_SIGMA, colors.shape)
    img = np.floor(np.clip(noisy, 0.0, 255.0) + 0.5).astype(np.uint8)
    return SyntheticScene(
        seed=seed, image=ImageRGB(img), gt_mask=MaskGrid(mask.astype(np.uint8))
    )


def _unit_rows(a: np.ndarray) -> np.ndarray:
    norms = np.sqrt((a * a).sum(axis=1, keepdims=True))
    return np.divide(a, norms, out=np.zeros_like(a), where=norms > 0.0)


class SyntheticEncoder(EncoderBackend):
    """Class-prototype embeddings over a fixed patch grid.

    dim / noise_sigma / seed control the embedding width, the additive
    Gaussian noise before renormalization, and every random draw. The
    same image always encodes to bit-identical features.
    """

    def __init__(
        self,
        dim: int = 32,
        noise_sigma: float = 0.1,
        seed: int = 0,
        patch: int = PATCH,
    ) -> None:
        if dim < 4:
            raise ValueError(f"dim must be >= 4, got {dim}")
        if noise_sigma < 0.0:
            raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
        if patch < 1:
            raise ValueError(f"patch must be >= 1, got {patch}")
        self._dim = dim
        self._noise_sigma = float(noise_sigma)
        self._seed = int(seed)
        self._patch = patch
        rng = np.random.default_rng(self._seed)
        self._proto_bg = _unit_rows(rng.normal(size=(1, dim)))[0]
        self._proto_fg = _unit_rows(rng.normal(size=(1, dim)))[0]
        self._mix_dir = _unit_rows(rng.normal(size=(1, dim)))[0]

    def info(self) -> EncoderInfo:
        return EncoderInfo(
            name="synthetic",
            patch=self._patch,
            input_size=None,
            dim=self._dim,
            kinds=tuple(kind for kind, _ in KIND_MIX),
            meta={"noise_sigma": repr(self._noise_sigma), "seed": str(self._seed)},
        )

    def grid_for(self, height: int, width: int) -> tuple[int, int]:
        if height % self._patch or width % self._patch:
            raise ValueError(
                f"image size ({height}, {width}) is not a multiple of patch {self._patch}"
            )
        return height // self._patch, width // self._patch

    def _image_rng(self, image: ImageRGB) -> np.random.Generator:
        digest = hashlib.blake2b(digest_size=16)
        digest.update(np.asarray(image.data.shape, dtype=np.int64).tobytes())
        digest.update(image.data.tobytes())
        digest.update(str(self._seed).encode())
        return np.random.default_rng(int.from_bytes(digest.digest(), "little"))

    def encode(
        self,
        image: ImageRGB | SyntheticScene,
        kinds: Sequence[str] | None = None,
    ) -> dict[str, FeatureMap]:
        if isinstance(image, SyntheticScene):
            image = image.image
        available = tuple(kind for kind, _ in KIND_MIX)
        wanted = tuple(kinds) if kinds is not None else available
        unknown = [k for k in wanted if k not in available]
        if unknown:
            raise ValueError(f"unknown embedding kinds {unknown}; have {available}")

        h, w = self.grid_for(image.height, image.width)
        p = self._patch
        fg_counts = (
            classify_pixels(image.data).reshape(h, p, w, p).sum(axis=(1, 3))
        )
        is_fg = (2 * fg_counts > p * p).reshape(-1)
        base = np.where(is_fg[:, None], self._proto_fg, self._proto_bg)
        noise = self._image_rng(image).normal(size=(h * w, self._dim))
        v = base + self._noise_sigma * noise
        v_norm = np.sqrt((v * v).sum(axis=1, keepdims=True))

        out: dict[str, FeatureMap] = {}
        for kind, alpha in KIND_MIX:
            if kind not in wanted:
                continue
            mixed = (1.0 - alpha) * v + alpha * v_norm * self._mix_dir[None, :]
            out[kind] = FeatureMap(h, w, _unit_rows(mixed))
        return out
