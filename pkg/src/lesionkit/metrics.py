"""The three challenge metrics, per case and aggregated across a dataset.

Per case:

* Dice: global foreground Dice ``2|P∩G| / (|P|+|G|)``. Defined only when the
  ground truth has foreground; an empty prediction against a non-empty ground
  truth scores 0.
* False-positive volume: total physical volume (mL) of predicted connected
  components that share no voxel with the ground-truth foreground.
* False-negative volume: total physical volume (mL) of ground-truth
  components that share no voxel with the predicted foreground.

"Overlap" means at least one shared voxel. Aggregation averages Dice over
tumour cases only and the two volumes over all cases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .ccl import DEFAULT_CONNECTIVITY, LabelMap, label_components
from .core import Mask, require_same_geometry, voxel_volume_ml


@dataclass(frozen=True)
class CaseMetrics:
    case_id: str
    dice: float | None  # None iff ground truth has no foreground
    fp_volume_ml: float
    fn_volume_ml: float
    n_pred_components: int
    n_gt_components: int
    gt_foreground_ml: float
    pred_foreground_ml: float


@dataclass(frozen=True)
class AggregateReport:
    n_cases: int
    n_tumour_cases: int
    mean_dice: float | None  # None when no tumour cases
    mean_fp_volume_ml: float
    mean_fn_volume_ml: float
    cases: tuple[CaseMetrics, ...]


def dice_score(pred: Mask, gt: Mask) -> float | None:
    """Global foreground Dice; None when the ground truth is empty."""
    require_same_geometry(pred.grid, gt.grid, "dice_score masks")
    n_gt = gt.foreground_count
    if n_gt == 0:
        return None
    n_pred = pred.foreground_count
    inter = int(np.count_nonzero(pred.bits & gt.bits))
    return 2.0 * inter / (n_pred + n_gt)


def _unmatched_volume_ml(labeled: LabelMap, other_bits: np.ndarray) -> float:
    """Total volume of ``labeled`` components with zero overlap in ``other_bits``."""
    if labeled.count == 0:
        return 0.0
    overlaps = np.bincount(labeled.flat()[other_bits.ravel(order="F")], minlength=labeled.count + 1)
    missed = sum(labeled.sizes[i] for i in range(1, labeled.count + 1) if overlaps[i] == 0)
    return missed * voxel_volume_ml(labeled.grid)


def false_positive_volume(pred: Mask, gt: Mask, connectivity: int = DEFAULT_CONNECTIVITY) -> float:
    """Volume (mL) of predicted components that do not touch the ground truth."""
    require_same_geometry(pred.grid, gt.grid, "false_positive_volume masks")
    return _unmatched_volume_ml(label_components(pred, connectivity), gt.bits)


def false_negative_volume(pred: Mask, gt: Mask, connectivity: int = DEFAULT_CONNECTIVITY) -> float:
    """Volume (mL) of ground-truth components missed entirely by the prediction."""
    require_same_geometry(pred.grid, gt.grid, "false_negative_volume masks")
    return _unmatched_volume_ml(label_components(gt, connectivity), pred.bits)


def evaluate_case(
    case_id: str, pred: Mask, gt: Mask, connectivity: int = DEFAULT_CONNECTIVITY
) -> CaseMetrics:
    """All per-case metrics for one prediction/ground-truth pair."""
    require_same_geometry(pred.grid, gt.grid, f"case {case_id!r} pred/gt masks")
    pred_labels = label_components(pred, connectivity)
    gt_labels = label_components(gt, connectivity)
    vml = voxel_volume_ml(gt.grid)
    return CaseMetrics(
        case_id=case_id,
        dice=dice_score(pred, gt),
        fp_volume_ml=_unmatched_volume_ml(pred_labels, gt.bits),
        fn_volume_ml=_unmatched_volume_ml(gt_labels, pred.bits),
        n_pred_components=pred_labels.count,
        n_gt_components=gt_labels.count,
        gt_foreground_ml=gt.foreground_count * vml,
        pred_foreground_ml=pred.foreground_count * vml,
    )


def aggregate(cases) -> AggregateReport:
    """Dataset means over a list of :class:`CaseMetrics`.

    Cases are ordered by ascending case_id so the report is independent of
    input (and worker) order. Dice is averaged over tumour cases only; the
    FP/FN volumes over all cases.
    """
    cases = sorted(cases, key=lambda c: c.case_id)
    if not cases:
        raise ValueError("aggregate requires at least one case")
    ids = [c.case_id for c in cases]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate case ids: {dupes}")

    tumour = [c.dice for c in cases if c.dice is not None]
    n = len(cases)
    return AggregateReport(
        n_cases=n,
        n_tumour_cases=len(tumour),
        mean_dice=(sum(tumour) / len(tumour)) if tumour else None,
        mean_fp_volume_ml=sum(c.fp_volume_ml for c in cases) / n,
        mean_fn_volume_ml=sum(c.fn_volume_ml for c in cases) / n,
        cases=tuple(cases),
    )


def report_to_json(report: AggregateReport, connectivity: int, min_size_applied: int) -> str:
    """Serialize a report to the toolkit's JSON schema (fixed key order)."""
    payload = {
        "n_cases": report.n_cases,
        "n_tumour_cases": report.n_tumour_cases,
        "mean_dice": report.mean_dice,
        "mean_fp_volume_ml": report.mean_fp_volume_ml,
        "mean_fn_volume_ml": report.mean_fn_volume_ml,
        "connectivity": connectivity,
        "min_size_applied": min_size_applied,
        "cases": [
            {
                "case_id": c.case_id,
                "dice": c.dice,
                "fp_volume_ml": c.fp_volume_ml,
                "fn_volume_ml": c.fn_volume_ml,
                "n_pred_components": c.n_pred_components,
                "n_gt_components": c.n_gt_components,
            }
            for c in report.cases
        ],
    }
    return json.dumps(payload, indent=2) + "\n"


def format_case_line(c: CaseMetrics) -> str:
    """One human-readable log line per case (volumes to 3 decimals)."""
    dice = "n/a" if c.dice is None else f"{c.dice:.4f}"
    return (
        f"{c.case_id}: dice={dice} fp={c.fp_volume_ml:.3f}mL fn={c.fn_volume_ml:.3f}mL "
        f"components pred={c.n_pred_components} gt={c.n_gt_components}"
    )


def format_report_summary(report: AggregateReport) -> str:
    dice = "n/a" if report.mean_dice is None else f"{report.mean_dice:.4f}"
    return (
        f"{report.n_cases} cases ({report.n_tumour_cases} with tumour): "
        f"mean dice={dice} mean fp={report.mean_fp_volume_ml:.3f}mL "
        f"mean fn={report.mean_fn_volume_ml:.3f}mL"
    )
