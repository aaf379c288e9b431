"""Scale-cascaded prior fusion.

Each support variant (original, enlarged, shrunken) yields its own query
prior. To decide how much to trust each one, the prior is transferred
back onto the support image: query patches the prior selects are
cosine-matched against every support patch, and the resulting map is
scored against the known support mask with a confidence-weighted IoU.
Scores become convex weights and the three priors are averaged.

The reverse pass always runs against the ORIGINAL support features and
mask, whichever variant produced the prior; the variants exist only to
change what the forward pass sees.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .grids import FeatureMap, Prior, matmul, minmax_normalize, threshold
from .scaling import SIZE_TAGS

__all__ = [
    "FusionConfig",
    "ReverseTransferReport",
    "reverse_transfer",
    "confidence_iou",
    "adaptive_weights",
    "fuse_priors",
    "fuse_scale_priors",
]


@dataclass(frozen=True)
class FusionConfig:
    """tau: binarization threshold applied to priors on both sides."""

    tau: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 < self.tau < 1.0):
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")


@dataclass(frozen=True)
class ReverseTransferReport:
    """Per-scale diagnostics: the reverse map, its score, and its weight."""

    size_tag: str
    p_rev: Prior
    c_iou: float
    weight: float

    def __post_init__(self) -> None:
        if self.size_tag not in SIZE_TAGS:
            raise ValueError(f"unknown size tag {self.size_tag!r}")
        if self.c_iou < 0.0:
            raise ValueError(f"confidence IoU must be >= 0, got {self.c_iou}")
        if not (0.0 <= self.weight <= 1.0):
            raise ValueError(f"weight must lie in [0, 1], got {self.weight}")


def _unit_rows(a: np.ndarray) -> np.ndarray:
    """Rows scaled to unit norm; all-zero rows stay zero (cosine 0 to all)."""
    norms = np.sqrt((a * a).sum(axis=1, keepdims=True))
    return np.divide(a, norms, out=np.zeros_like(a), where=norms > 0.0)


def reverse_transfer(p: Prior, fq: FeatureMap, fs: FeatureMap, tau: float) -> Prior:
    """Map a query prior back onto the support patch grid.

    Query patches where p > tau are cosine-matched against every support
    patch; the per-support-patch mean over the selected query patches is
    min-max normalized into a support-side prior. An empty selection
    yields all zeros.
    """
    if p.h != fq.h or p.w != fq.w:
        raise ValueError(
            f"prior grid ({p.h}, {p.w}) does not match query grid ({fq.h}, {fq.w})"
        )
    if fq.dim != fs.dim:
        raise ValueError(f"feature dims differ: {fq.dim} vs {fs.dim}")
    selected = threshold(p, tau).data.reshape(-1).astype(bool)
    if not selected.any():
        return Prior(np.zeros((fs.h, fs.w)))
    q_sel = _unit_rows(fq.data[selected])
    s_unit = _unit_rows(fs.data)
    cosines = matmul(q_sel, s_unit.T)
    return minmax_normalize(cosines.mean(axis=0).reshape(fs.h, fs.w))


def confidence_iou(p_rev: Prior, ms_r: Prior, tau: float) -> float:
    """IoU between the reverse map and the support mask, with the
    intersection weighted by the reverse map's own values.

    With A = p_rev > tau and B = ms_r > 0.5, the score is the sum of
    p_rev over the cells of A & B, divided by the cell count of A | B.
    An empty union scores 0. When p_rev is exactly binary this reduces
    to plain IoU.
    """
    if p_rev.data.shape != ms_r.data.shape:
        raise ValueError(
            f"grids differ: {p_rev.data.shape} vs {ms_r.data.shape}"
        )
    a = threshold(p_rev, tau).bool()
    b = threshold(ms_r, 0.5).bool()
    union = int((a | b).sum())
    if union == 0:
        return 0.0
    return float(p_rev.data[a & b].sum()) / float(union)


def adaptive_weights(c: Sequence[float]) -> tuple[float, ...]:
    """Normalize nonnegative scores to convex weights.

    All-zero scores (no scale matched the support at all) fall back to
    uniform weights rather than dividing by zero.
    """
    vals = tuple(float(x) for x in c)
    if any(v < 0.0 for v in vals):
        raise ValueError(f"scores must be >= 0, got {vals}")
    total = sum(vals)
    if total == 0.0:
        return tuple(1.0 / len(vals) for _ in vals)
    return tuple(v / total for v in vals)


def fuse_priors(priors: Sequence[Prior], weights: Sequence[float]) -> Prior:
    """Pointwise convex combination of equally shaped priors."""
    if len(priors) != len(weights) or not priors:
        raise ValueError("need one weight per prior")
    shape = priors[0].data.shape
    for p in priors[1:]:
        if p.data.shape != shape:
            raise ValueError(f"prior grids differ: {shape} vs {p.data.shape}")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {sum(weights)}")
    out = np.zeros(shape, dtype=np.float64)
    for p, w in zip(priors, weights):
        out += float(w) * p.data
    # Convexity keeps values in [0, 1] mathematically; clip the couple of
    # ulps that float accumulation can add so the container accepts it.
    return Prior(np.clip(out, 0.0, 1.0))


def fuse_scale_priors(
    priors_by_tag: Mapping[str, Prior],
    fq: FeatureMap,
    fs: FeatureMap,
    ms_r: Prior,
    config: FusionConfig = FusionConfig(),
) -> tuple[Prior, tuple[ReverseTransferReport, ...]]:
    """Score and fuse the per-scale priors; returns the fused prior plus
    one report per scale in (ori, xl, xs) order.

    fs and ms_r are the original support's features and pooled mask; they
    anchor the scoring for every scale.
    """
    missing = [t for t in SIZE_TAGS if t not in priors_by_tag]
    if missing:
        raise ValueError(f"missing priors for size tags {missing}")
    revs = {t: reverse_transfer(priors_by_tag[t], fq, fs, config.tau) for t in SIZE_TAGS}
    scores = {t: confidence_iou(revs[t], ms_r, config.tau) for t in SIZE_TAGS}
    weights = adaptive_weights([scores[t] for t in SIZE_TAGS])
    fused = fuse_priors([priors_by_tag[t] for t in SIZE_TAGS], weights)
    reports = tuple(
        ReverseTransferReport(
            size_tag=t, p_rev=revs[t], c_iou=scores[t], weight=weights[i]
        )
        for i, t in enumerate(SIZE_TAGS)
    )
    return fused, reports
