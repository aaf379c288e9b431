"""Overlap metrics and directory-level evaluation.

IoU and Dice over binary masks, plus the evaluator that pairs predicted
and ground-truth mask files by name and emits a per-image CSV (values
as percentages with two decimals) and aggregate means. Files present on
only one side are reported and excluded rather than crashing the run.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

from .exceptions import ConfigError
from .grids import MaskGrid
from .imgio import load_mask

__all__ = ["iou_dice", "EvalRecord", "EvalSummary", "eval_run", "records_to_csv"]

MASK_SUFFIXES = (".png", ".pgm")


def iou_dice(pred: MaskGrid, gt: MaskGrid) -> tuple[float, float]:
    """(IoU, Dice); two empty masks agree perfectly and score (1, 1)."""
    if pred.data.shape != gt.data.shape:
        raise ValueError(f"mask shapes differ: {pred.data.shape} vs {gt.data.shape}")
    inter = int((pred.data & gt.data).sum())
    a, b = pred.area, gt.area
    if a + b == 0:
        return 1.0, 1.0
    union = a + b - inter
    return inter / union, 2.0 * inter / (a + b)


@dataclass(frozen=True)
class EvalRecord:
    """One query's scores; rounds/prompts/wall_ms are filled by the run
    pipeline and left blank when evaluating bare mask directories."""

    query_id: str
    iou: float
    dice: float
    rounds: int | None = None
    prompts: int | None = None
    wall_ms: float | None = None

    def __post_init__(self) -> None:
        for name, v in (("iou", self.iou), ("dice", self.dice)):
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class EvalSummary:
    records: tuple[EvalRecord, ...]
    mean_iou: float
    mean_dice: float
    unmatched: tuple[str, ...]


def records_to_csv(records: tuple[EvalRecord, ...] | list[EvalRecord]) -> str:
    """Render records as CSV text, metric values as XX.XX percentages."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["query_id", "iou_pct", "dice_pct", "rounds", "prompts", "wall_ms"])
    for r in records:
        writer.writerow(
            [
                r.query_id,
                f"{r.iou * 100.0:.2f}",
                f"{r.dice * 100.0:.2f}",
                "" if r.rounds is None else r.rounds,
                "" if r.prompts is None else r.prompts,
                "" if r.wall_ms is None else f"{r.wall_ms:.2f}",
            ]
        )
    return buf.getvalue()


def _mask_files(directory: Path) -> dict[str, Path]:
    return {
        p.name: p
        for p in sorted(directory.iterdir())
        if p.is_file() and p.suffix.lower() in MASK_SUFFIXES
    }


def eval_run(pred_dir: str | Path, gt_dir: str | Path) -> EvalSummary:
    """Score every same-named mask pair between the two directories.

    Records come back sorted by filename. Names present in only one
    directory are listed in `unmatched` and excluded from the means; the
    caller decides the exit status. An empty or missing prediction
    directory is a configuration error.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise ConfigError(f"not a directory: {d}")
    preds = _mask_files(pred_dir)
    gts = _mask_files(gt_dir)
    if not preds:
        raise ConfigError(f"no mask files found in prediction directory {pred_dir}")
    shared = sorted(set(preds) & set(gts))
    unmatched = tuple(sorted(set(preds) ^ set(gts)))
    records = []
    for name in shared:
        iou, dice = iou_dice(load_mask(preds[name]), load_mask(gts[name]))
        records.append(EvalRecord(query_id=name, iou=iou, dice=dice))
    if not records:
        raise ConfigError(
            f"no filenames shared between {pred_dir} and {gt_dir}; "
            f"unmatched: {list(unmatched)}"
        )
    mean_iou = sum(r.iou for r in records) / len(records)
    mean_dice = sum(r.dice for r in records) / len(records)
    return EvalSummary(
        records=tuple(records),
        mean_iou=mean_iou,
        mean_dice=mean_dice,
        unmatched=unmatched,
    )
