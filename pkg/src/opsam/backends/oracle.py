"""Segmenter that answers prompts from a hidden ground-truth mask.

It behaves like an idealized promptable model: a positive prompt inside
the object returns that object's whole 4-connected component, a
negative prompt vetoes its component, and a positive prompt on the
background returns a small disk of false positive. The disk is the
deliberate flaw that keeps the negative-remediation path of the prompt
loop honest: a later negative prompt placed inside the disk suppresses
it. The self-predicted IoU is the true IoU against the hidden mask.

Ground truths are registered up front and looked up by image content,
so the engine under test never sees them.
"""
from __future__ import annotations

import hashlib
from typing import Sequence

import numpy as np
from scipy import ndimage

from ..exceptions import BackendError
from ..grids import ImageRGB, MaskGrid
from ..prompting import NEGATIVE, POSITIVE, PromptPoint
from .base import SegmenterBackend, SegmenterResult, SegmenterSession

__all__ = ["OracleSegmenter"]

DISK_RADIUS = 3  # false-positive disk: pixels with dy^2 + dx^2 <= 9


def _image_key(image: ImageRGB) -> bytes:
    digest = hashlib.blake2b(digest_size=16)
    digest.update(np.asarray(image.data.shape, dtype=np.int64).tobytes())
    digest.update(image.data.tobytes())
    return digest.digest()


def _disk_pixels(y: int, x: int, shape: tuple[int, int]) -> np.ndarray:
    """Boolean grid of the radius-3 disk around (y, x), clipped to frame."""
    hh, ww = shape
    out = np.zeros(shape, dtype=bool)
    r = DISK_RADIUS
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy * dy + dx * dx <= r * r:
                py, px = y + dy, x + dx
                if 0 <= py < hh and 0 <= px < ww:
                    out[py, px] = True
    return out


class _OracleSession(SegmenterSession):
    def __init__(self, gt: MaskGrid) -> None:
        self._gt = gt
        # 4-connected components (cross-shaped structuring element).
        self._labels, self._n = ndimage.label(gt.data)

    def segment(self, prompts: Sequence[PromptPoint]) -> SegmenterResult:
        hh, ww = self._gt.data.shape
        for p in prompts:
            if not (0 <= p.y < hh and 0 <= p.x < ww):
                raise ValueError(f"prompt ({p.x}, {p.y}) outside {ww}x{hh} frame")
        positives = [p for p in prompts if p.label == POSITIVE]
        negatives = [p for p in prompts if p.label == NEGATIVE]

        mask = np.zeros((hh, ww), dtype=bool)
        if positives:
            vetoed = {
                int(self._labels[p.y, p.x])
                for p in negatives
                if self._labels[p.y, p.x] > 0
            }
            for p in positives:
                comp = int(self._labels[p.y, p.x])
                if comp > 0:
                    if comp not in vetoed:
                        mask |= self._labels == comp
                else:
                    disk = _disk_pixels(p.y, p.x, (hh, ww))
                    if not any(disk[n.y, n.x] for n in negatives):
                        mask |= disk
            iou = self._true_iou(mask)
        else:
            iou = 0.0
        return SegmenterResult(mask=MaskGrid(mask.astype(np.uint8)), predicted_iou=iou)

    def _true_iou(self, mask: np.ndarray) -> float:
        gt = self._gt.bool()
        union = int((mask | gt).sum())
        if union == 0:
            return 1.0
        return float(int((mask & gt).sum())) / float(union)


class OracleSegmenter(SegmenterBackend):
    def __init__(self) -> None:
        self._gts: dict[bytes, MaskGrid] = {}

    def register(self, image: ImageRGB, gt_mask: MaskGrid) -> None:
        if image.data.shape[:2] != gt_mask.data.shape:
            raise ValueError("image and ground-truth shapes differ")
        self._gts[_image_key(image)] = gt_mask

    def open(self, image: ImageRGB) -> _OracleSession:
        gt = self._gts.get(_image_key(image))
        if gt is None:
            raise BackendError(
                "no ground truth registered for this image; call register() first"
            )
        return _OracleSession(gt)
