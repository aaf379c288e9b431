"""Grid containers and the numeric primitives everything else builds on.

Images are (H, W, 3) uint8, masks are (H, W) with values in {0, 1},
feature maps are (h*w, D) float64 patch embeddings in row-major patch
order, and priors are (h, w) float64 likelihood grids normalized to
[0, 1]. All containers are immutable after construction and every
operation in this module is pure: same input, same output, always.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ImageRGB",
    "MaskGrid",
    "FeatureMap",
    "Prior",
    "matmul",
    "resize_mask_to_patches",
    "threshold",
    "minmax_normalize",
    "upsample_nearest",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ImageRGB:
    """Eight-bit RGB image, shape (H, W, 3), channels in [0, 255]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.data)
        if a.ndim != 3 or a.shape[2] != 3 or min(a.shape[:2]) < 1:
            raise ValueError(f"image must be (H, W, 3) with H, W >= 1, got {a.shape}")
        if not np.issubdtype(a.dtype, np.integer) and a.dtype != np.uint8:
            raise ValueError(f"image channels must be integers, got dtype {a.dtype}")
        if a.dtype != np.uint8:
            if a.min() < 0 or a.max() > 255:
                raise ValueError("image channels must lie in [0, 255]")
            a = a.astype(np.uint8)
        object.__setattr__(self, "data", _frozen(a))

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])


@dataclass(frozen=True)
class MaskGrid:
    """Binary (H, W) grid with values in {0, 1}, stored as uint8."""

    data: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.data)
        if a.ndim != 2 or min(a.shape) < 1:
            raise ValueError(f"mask must be 2-D and nonempty, got shape {a.shape}")
        if a.dtype == bool:
            a = a.astype(np.uint8)
        if not np.issubdtype(a.dtype, np.integer):
            raise ValueError(f"mask values must be integers, got dtype {a.dtype}")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("mask values must be 0 or 1")
        object.__setattr__(self, "data", _frozen(a.astype(np.uint8)))

    @classmethod
    def from_binary(cls, a: np.ndarray) -> "MaskGrid":
        """Coerce any array to a mask: nonzero becomes 1."""
        return cls(np.asarray(a) != 0)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def area(self) -> int:
        return int(self.data.sum())

    def bool(self) -> np.ndarray:
        return self.data.astype(bool)


@dataclass(frozen=True)
class FeatureMap:
    """Patch embeddings over an (h, w) grid: data has shape (h*w, D)."""

    h: int
    w: int
    data: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.data, dtype=np.float64)
        if self.h < 1 or self.w < 1:
            raise ValueError("patch grid must be at least 1x1")
        if a.ndim != 2 or a.shape[0] != self.h * self.w or a.shape[1] < 1:
            raise ValueError(
                f"feature data must be ({self.h * self.w}, D) with D >= 1, got {a.shape}"
            )
        if not np.isfinite(a).all():
            raise ValueError("feature map contains non-finite values")
        object.__setattr__(self, "data", _frozen(a))

    @property
    def hw(self) -> int:
        return self.h * self.w

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])


@dataclass(frozen=True)
class Prior:
    """Per-patch likelihood grid with finite values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 2 or min(a.shape) < 1:
            raise ValueError(f"prior must be 2-D and nonempty, got shape {a.shape}")
        if not np.isfinite(a).all():
            raise ValueError("prior contains non-finite values")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("prior values must lie in [0, 1]; normalize first")
        object.__setattr__(self, "data", _frozen(a))

    @property
    def h(self) -> int:
        return int(self.data.shape[0])

    @property
    def w(self) -> int:
        return int(self.data.shape[1])

    def flat(self) -> np.ndarray:
        """Row-major (h*w,) view, matching FeatureMap patch order."""
        return self.data.reshape(-1)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Deterministic matrix product with a fixed accumulation order.

    Accumulates over the shared dimension in ascending index order, so the
    result is bit-for-bit reproducible and identical to a naive triple
    loop (BLAS kernels reorder the reduction and do not guarantee this).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("matmul operands must be finite")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    for k in range(a.shape[1]):
        out += a[:, k, None] * b[None, k, :]
    return out


def resize_mask_to_patches(mask: MaskGrid, h: int, w: int) -> Prior:
    """Area-pool a pixel mask down to an (h, w) patch grid.

    Each cell is the mean of the pixels it covers, with fractional edge
    pixels weighted by overlap, so values stay in [0, 1] and the mask may
    remain fractional rather than re-binarized.
    """
    if h < 1 or w < 1 or h > mask.height or w > mask.width:
        raise ValueError(
            f"patch grid ({h}, {w}) must be within mask shape "
            f"({mask.height}, {mask.width})"
        )
    rows = _pool_weights(mask.height, h)
    cols = _pool_weights(mask.width, w)
    pooled = matmul(matmul(rows, mask.data.astype(np.float64)), cols.T)
    return Prior(np.clip(pooled, 0.0, 1.0))


def _pool_weights(n_px: int, n_cells: int) -> np.ndarray:
    """(n_cells, n_px) row-stochastic matrix of pixel-overlap weights."""
    step = n_px / n_cells
    weights = np.zeros((n_cells, n_px), dtype=np.float64)
    for i in range(n_cells):
        lo, hi = i * step, (i + 1) * step
        for p in range(int(np.floor(lo)), min(n_px, int(np.ceil(hi)))):
            overlap = min(hi, p + 1) - max(lo, p)
            if overlap > 0:
                weights[i, p] = overlap / step
    return weights


def threshold(prior: Prior | np.ndarray, t: float) -> MaskGrid:
    """Binarize a prior: cell is 1 iff its value is strictly greater than t."""
    data = prior.data if isinstance(prior, Prior) else np.asarray(prior, dtype=np.float64)
    return MaskGrid((data > t).astype(np.uint8))


def minmax_normalize(raw: np.ndarray) -> Prior:
    """Affinely map a finite grid onto [0, 1]; a constant grid maps to zeros."""
    a = np.asarray(raw, dtype=np.float64)
    if a.ndim != 2:
        a = a.reshape(a.shape[0], -1) if a.ndim > 2 else a.reshape(1, -1)
    if not np.isfinite(a).all():
        raise ValueError("cannot normalize a grid with non-finite values")
    lo, hi = float(a.min()), float(a.max())
    if hi == lo:
        return Prior(np.zeros(a.shape))
    return Prior(np.clip((a - lo) / (hi - lo), 0.0, 1.0))


def upsample_nearest(prior: Prior, height: int, width: int) -> np.ndarray:
    """Nearest-neighbor lift of an (h, w) grid to (height, width) pixels."""
    if height < prior.h or width < prior.w:
        raise ValueError("upsample target must be at least the prior grid size")
    r = (np.arange(height) * prior.h) // height
    c = (np.arange(width) * prior.w) // width
    return prior.data[np.ix_(r, c)]
