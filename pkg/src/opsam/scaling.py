"""Support augmentation: rescale the target region about its centroid.

An enlarged and a shrunken copy of the support object give the fusion
stage three size hypotheses to score against each query. Scaling uses
inverse nearest-neighbor resampling about the float centroid of the
mask, so the mask stays binary and factor 1.0 is an exact identity.
Shrinking exposes a ring of stale object pixels; those are filled by an
onion-peel neighbor-mean pass before the variant is used.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import ImageRGB, MaskGrid

__all__ = ["SupportBundle", "scale_lesion", "inpaint_ring", "build_support_bundle"]

SIZE_TAGS = ("ori", "xl", "xs")


@dataclass(frozen=True)
class SupportBundle:
    """The three support variants: original, enlarged (xl), shrunken (xs)."""

    ori: tuple[ImageRGB, MaskGrid]
    xl: tuple[ImageRGB, MaskGrid]
    xs: tuple[ImageRGB, MaskGrid]
    scale_xl: float
    scale_xs: float

    def __post_init__(self) -> None:
        shape = self.ori[0].data.shape
        for tag in SIZE_TAGS:
            img, mask = getattr(self, tag)
            if img.data.shape != shape or mask.data.shape != shape[:2]:
                raise ValueError(f"variant {tag!r} does not share the original frame")
        if not (self.scale_xl > 1.0 > self.scale_xs > 0.0):
            raise ValueError(
                f"need scale_xl > 1 > scale_xs > 0, got {self.scale_xl}, {self.scale_xs}"
            )

    def pair(self, tag: str) -> tuple[ImageRGB, MaskGrid]:
        if tag not in SIZE_TAGS:
            raise ValueError(f"unknown size tag {tag!r}")
        return getattr(self, tag)


def _round_half_up(x: np.ndarray) -> np.ndarray:
    # floor(x + 0.5): ties away from the origin side, unlike np.rint which
    # rounds halves to even and would shift box edges inconsistently.
    return np.floor(x + 0.5).astype(np.int64)


def scale_lesion(
    img: ImageRGB, mask: MaskGrid, factor: float
) -> tuple[ImageRGB, MaskGrid]:
    """Resample the masked region by `factor` about the mask centroid.

    Every frame pixel whose inverse-mapped source lands inside the
    original mask becomes an object pixel carrying the source's color;
    everything else keeps its original color. Pixels the object vacates
    (shrinking) therefore retain stale colors; see inpaint_ring.
    """
    if img.data.shape[:2] != mask.data.shape:
        raise ValueError("image and mask shapes differ")
    if factor <= 0.0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    if mask.area == 0:
        raise ValueError("cannot scale an empty mask")
    ys, xs = np.nonzero(mask.data)
    cy, cx = float(ys.mean()), float(xs.mean())

    hh, ww = mask.data.shape
    gy, gx = np.meshgrid(np.arange(hh), np.arange(ww), indexing="ij")
    src_y = _round_half_up(cy + (gy - cy) / factor)
    src_x = _round_half_up(cx + (gx - cx) / factor)
    inside = (src_y >= 0) & (src_y < hh) & (src_x >= 0) & (src_x < ww)
    sy = np.where(inside, src_y, 0)
    sx = np.where(inside, src_x, 0)
    new_mask = inside & (mask.data[sy, sx] == 1)
    if not new_mask.any():
        raise ValueError(f"factor {factor} scales the region below one pixel")

    out = img.data.copy()
    out[new_mask] = img.data[sy[new_mask], sx[new_mask]]
    return ImageRGB(out), MaskGrid(new_mask.astype(np.uint8))


def inpaint_ring(img: ImageRGB, hole: MaskGrid) -> ImageRGB:
    """Fill hole pixels from the outside in by averaging known neighbors.

    Each pass, every hole pixel with at least one known 4-neighbor takes
    the mean of those known neighbors (computed from the values before
    the pass) and becomes known. Passes repeat until the hole is gone, so
    the fill marches inward one pixel layer at a time. Pixels outside the
    hole are never touched.
    """
    if img.data.shape[:2] != hole.data.shape:
        raise ValueError("image and hole shapes differ")
    if hole.area == 0:
        return img
    if hole.area == hole.data.size:
        raise ValueError("hole covers the entire frame; nothing to fill from")

    vals = img.data.astype(np.float64)
    unknown = hole.bool()
    while unknown.any():
        known = ~unknown
        acc = np.zeros_like(vals)
        cnt = np.zeros(unknown.shape, dtype=np.float64)
        for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nb_known = np.zeros_like(known)
            nb_vals = np.zeros_like(vals)
            src_rows = slice(max(dy, 0), vals.shape[0] + min(dy, 0))
            dst_rows = slice(max(-dy, 0), vals.shape[0] + min(-dy, 0))
            src_cols = slice(max(dx, 0), vals.shape[1] + min(dx, 0))
            dst_cols = slice(max(-dx, 0), vals.shape[1] + min(-dx, 0))
            nb_known[dst_rows, dst_cols] = known[src_rows, src_cols]
            nb_vals[dst_rows, dst_cols] = vals[src_rows, src_cols]
            take = unknown & nb_known
            acc[take] += nb_vals[take]
            cnt[take] += 1.0
        frontier = unknown & (cnt > 0)
        vals[frontier] = acc[frontier] / cnt[frontier, None]
        unknown = unknown & ~frontier

    filled = _round_half_up(vals).clip(0, 255).astype(np.uint8)
    out = img.data.copy()
    out[hole.bool()] = filled[hole.bool()]
    return ImageRGB(out)


def build_support_bundle(
    img: ImageRGB, mask: MaskGrid, scale_xl: float = 1.5, scale_xs: float = 0.5
) -> SupportBundle:
    """Assemble the original/enlarged/shrunken support triple.

    The shrunken variant inpaints the ring of pixels the object vacated
    (old mask minus new mask); the enlarged one needs no fill because the
    grown object covers its own history.
    """
    if not (scale_xl > 1.0 > scale_xs > 0.0):
        raise ValueError(
            f"need scale_xl > 1 > scale_xs > 0, got {scale_xl}, {scale_xs}"
        )
    xl_img, xl_mask = scale_lesion(img, mask, scale_xl)
    xs_img, xs_mask = scale_lesion(img, mask, scale_xs)
    ring = MaskGrid((mask.data & (1 - xs_mask.data)).astype(np.uint8))
    xs_img = inpaint_ring(xs_img, ring)
    return SupportBundle(
        ori=(img, mask),
        xl=(xl_img, xl_mask),
        xs=(xs_img, xs_mask),
        scale_xl=float(scale_xl),
        scale_xs=float(scale_xs),
    )
