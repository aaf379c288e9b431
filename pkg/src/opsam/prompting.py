"""Iterative point-prompt evolution against a promptable segmenter.

A fused prior is lifted to pixel resolution and thresholded twice: a
tight mask marking where the object almost surely is, and a loose mask
marking where it might plausibly extend. The loop places a positive
point at the deepest interior pixel (max distance to background) of the
not-yet-covered tight region, asks the segmenter for a mask given the
cumulative prompt list, and repeats until the latest mask both covers
the tight region and carries a confident self-predicted IoU. A mask
that spills far outside the loose region is treated as noise: it is
dropped from the final union and answered with one negative prompt
placed inside the spill. The final mask is the union of retained
per-round masks.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .grids import ImageRGB, MaskGrid, Prior, threshold, upsample_nearest

__all__ = [
    "POSITIVE",
    "NEGATIVE",
    "PromptPoint",
    "EvolutionConfig",
    "RoundRecord",
    "EvolutionTrace",
    "edt_center",
    "bbox_center",
    "coverage",
    "prompt_and_segment",
    "evolve_prompts",
]

POSITIVE = 1
NEGATIVE = 0

ACTIONS = ("init", "cover_gap", "expand_loose", "negative_remediation")


@dataclass(frozen=True)
class PromptPoint:
    """One point prompt: x is the pixel column, y the pixel row."""

    x: int
    y: int
    label: int

    def __post_init__(self) -> None:
        if self.x < 0 or self.y < 0:
            raise ValueError(f"prompt coordinates must be >= 0, got ({self.x}, {self.y})")
        if self.label not in (POSITIVE, NEGATIVE):
            raise ValueError(f"label must be {POSITIVE} (pos) or {NEGATIVE} (neg)")


@dataclass(frozen=True)
class EvolutionConfig:
    """Loop thresholds and budgets.

    theta_tight / theta_loose  prior cutoffs for the tight/loose masks
    score_thresh               both coverage and predicted IoU must reach
                               this for the loop to stop early
    neg_area_thresh            spill pixel count that flags a mask as
                               noise; None = 5% of the loose area, >= 16
    max_rounds                 cap on refinement rounds after the first
                               prompt, and separately on remediations
    prompt_center              "edt" (deepest interior pixel) or "bbox"
                               (bounding-box center baseline)
    """

    theta_tight: float = 0.7
    theta_loose: float = 0.5
    score_thresh: float = 0.85
    neg_area_thresh: int | None = None
    max_rounds: int = 5
    prompt_center: str = "edt"

    def __post_init__(self) -> None:
        if not (0.0 < self.theta_loose < self.theta_tight < 1.0):
            raise ValueError(
                f"need 0 < theta_loose < theta_tight < 1, got "
                f"{self.theta_loose}, {self.theta_tight}"
            )
        if not (0.0 < self.score_thresh <= 1.0):
            raise ValueError(f"score_thresh must be in (0, 1], got {self.score_thresh}")
        if self.neg_area_thresh is not None and self.neg_area_thresh < 1:
            raise ValueError(f"neg_area_thresh must be >= 1, got {self.neg_area_thresh}")
        if self.max_rounds < 1:
            raise ValueError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if self.prompt_center not in ("edt", "bbox"):
            raise ValueError(f"prompt_center must be 'edt' or 'bbox', got {self.prompt_center!r}")

    def center_fn(self) -> Callable[[MaskGrid], tuple[int, int]]:
        return edt_center if self.prompt_center == "edt" else bbox_center


@dataclass(frozen=True)
class RoundRecord:
    """One segmenter call: the prompt added, the mask returned, and how
    the loop judged it."""

    index: int
    action: str
    prompt: PromptPoint
    mask: MaskGrid
    cov: float
    iou: float
    retained: bool

    def __post_init__(self) -> None:
        if self.action not in ACTIONS:
            raise ValueError(f"unknown action {self.action!r}")


@dataclass(frozen=True)
class EvolutionTrace:
    rounds: tuple[RoundRecord, ...]
    final_mask: MaskGrid

    def n_prompts(self) -> int:
        return len(self.rounds)

    def to_jsonl(self) -> str:
        """One JSON object per round; stable key order for diffing."""
        lines = []
        for r in self.rounds:
            lines.append(
                json.dumps(
                    {
                        "round": r.index,
                        "action": r.action,
                        "prompt": {"x": r.prompt.x, "y": r.prompt.y, "label": r.prompt.label},
                        "cov": r.cov,
                        "iou": r.iou,
                        "retained": r.retained,
                    }
                )
            )
        return "\n".join(lines) + ("\n" if lines else "")


def edt_center(m: MaskGrid) -> tuple[int, int]:
    """(row, col) of the foreground pixel deepest inside the region.

    Depth is the exact Euclidean distance to the nearest background
    pixel, with the frame border counting as background. Ties go to the
    smallest row, then the smallest column.
    """
    if m.area == 0:
        raise ValueError("cannot locate the center of an empty mask")
    padded = np.pad(m.data, 1)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    idx = int(np.argmax(dist))
    return idx // m.width, idx % m.width


def bbox_center(m: MaskGrid) -> tuple[int, int]:
    """(row, col) center of the tight bounding box (halves round down).

    Kept as the baseline placement rule; unlike edt_center it may land
    on a background pixel for non-convex regions.
    """
    if m.area == 0:
        raise ValueError("cannot locate the center of an empty mask")
    rows, cols = np.nonzero(m.data)
    return (
        (int(rows.min()) + int(rows.max())) // 2,
        (int(cols.min()) + int(cols.max())) // 2,
    )


def coverage(m: MaskGrid, p_t: MaskGrid) -> float:
    """Fraction of the tight region that the mask covers; 1.0 if the
    tight region is empty (nothing left to cover)."""
    if m.data.shape != p_t.data.shape:
        raise ValueError(f"grids differ: {m.data.shape} vs {p_t.data.shape}")
    target = p_t.area
    if target == 0:
        return 1.0
    return float(int((m.data & p_t.data).sum())) / float(target)


def prompt_and_segment(
    region: MaskGrid,
    prompts: list[PromptPoint],
    label: int,
    session,
    p_t: MaskGrid,
    center_fn: Callable[[MaskGrid], tuple[int, int]] = edt_center,
) -> tuple[PromptPoint, MaskGrid, float, float]:
    """Place one prompt at the region's center and re-query the segmenter.

    The point is appended to the cumulative prompt list and the segmenter
    receives the full list, so every call refines the previous answer
    rather than starting over. Returns the new point, the mask, the
    mask's coverage of the tight region, and the segmenter's predicted
    IoU.
    """
    if region.area == 0:
        raise ValueError("cannot prompt an empty region")
    row, col = center_fn(region)
    point = PromptPoint(x=col, y=row, label=label)
    prompts.append(point)
    result = session.segment(tuple(prompts))
    return point, result.mask, coverage(result.mask, p_t), float(result.predicted_iou)


def _auto_neg_area(loose_area: int) -> int:
    return max(16, int(np.floor(0.05 * loose_area + 0.5)))


def evolve_prompts(
    query: ImageRGB,
    prior: Prior,
    segmenter,
    config: EvolutionConfig = EvolutionConfig(),
) -> EvolutionTrace:
    """Run the full prompt-evolution loop for one query image.

    Control flow per round: prompt the uncovered part of the tight
    region while coverage lags, otherwise the uncovered part of the
    loose region; stop when the latest mask clears both the coverage and
    IoU bars, the budget runs out, or there is nothing left to prompt.
    After every round the latest mask is checked for spill beyond the
    loose region; a spilling mask is dropped from the union and answered
    with a negative prompt placed at the spill's deepest pixel.

    "Already prompted" is tracked as the union of every mask seen,
    including dropped ones, so a region that produced a noisy mask is
    not re-prompted verbatim in the next round.
    """
    hh, ww = query.height, query.width
    pix = upsample_nearest(prior, hh, ww)
    p_t = threshold(pix, config.theta_tight)
    p_l = threshold(pix, config.theta_loose)
    eta = (
        config.neg_area_thresh
        if config.neg_area_thresh is not None
        else _auto_neg_area(p_l.area)
    )
    center_fn = config.center_fn()

    if p_t.area == 0:
        return EvolutionTrace(rounds=(), final_mask=MaskGrid(np.zeros((hh, ww), np.uint8)))

    session = segmenter.open(query)
    try:
        prompts: list[PromptPoint] = []
        records: list[RoundRecord] = []
        seen = np.zeros((hh, ww), dtype=bool)
        remediations = 0

        def run_round(region: MaskGrid, label: int, action: str) -> tuple[float, float]:
            nonlocal seen
            point, mask, cov, iou = prompt_and_segment(
                region, prompts, label, session, p_t, center_fn
            )
            records.append(
                RoundRecord(
                    index=len(records), action=action, prompt=point,
                    mask=mask, cov=cov, iou=iou, retained=True,
                )
            )
            seen = seen | mask.bool()
            return cov, iou

        def maybe_remediate(cov: float, iou: float) -> tuple[float, float]:
            """Drop the latest mask and answer with a negative prompt if
            it spills past the loose region by at least eta pixels. At
            most one remediation per round and max_rounds in total."""
            nonlocal remediations
            last = records[-1]
            if last.action == "negative_remediation" or remediations >= config.max_rounds:
                return cov, iou
            spill = last.mask.data.astype(bool) & ~p_l.bool()
            if int(spill.sum()) < eta:
                return cov, iou
            records[-1] = replace(last, retained=False)
            remediations += 1
            return run_round(
                MaskGrid(spill.astype(np.uint8)), NEGATIVE, "negative_remediation"
            )

        cov, iou = run_round(p_t, POSITIVE, "init")
        cov, iou = maybe_remediate(cov, iou)

        loops = 0
        while not (cov >= config.score_thresh and iou >= config.score_thresh):
            if loops >= config.max_rounds:
                break
            loops += 1
            base = p_t if cov < config.score_thresh else p_l
            action = "cover_gap" if cov < config.score_thresh else "expand_loose"
            region = base.data.astype(bool) & ~seen
            if not region.any():
                break
            cov, iou = run_round(MaskGrid(region.astype(np.uint8)), POSITIVE, action)
            cov, iou = maybe_remediate(cov, iou)
    finally:
        close = getattr(session, "close", None)
        if close is not None:
            close()

    final = np.zeros((hh, ww), dtype=bool)
    for r in records:
        if r.retained:
            final |= r.mask.bool()
    return EvolutionTrace(rounds=tuple(records), final_mask=MaskGrid(final.astype(np.uint8)))
