"""Minimum-size component filtering and threshold sweeps.

The removal rule is strict less-than: a predicted component survives iff its
voxel count is >= the threshold. A threshold of 0 is the no-removal baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ccl import DEFAULT_CONNECTIVITY, label_components
from .core import Mask
from .metrics import aggregate, evaluate_case


@dataclass(frozen=True)
class SweepRow:
    """Aggregate means after filtering every prediction at one threshold."""

    threshold_voxels: int
    dice: float | None
    fp_volume_ml: float
    fn_volume_ml: float


def filter_min_size(mask: Mask, min_voxels: int, connectivity: int = DEFAULT_CONNECTIVITY) -> Mask:
    """Remove connected components smaller than ``min_voxels`` voxels.

    Components of exactly ``min_voxels`` survive; ``min_voxels == 0`` returns
    the input unchanged.
    """
    if min_voxels < 0:
        raise ValueError(f"min_voxels must be >= 0, got {min_voxels}")
    if min_voxels == 0:
        return mask
    labeled = label_components(mask, connectivity)
    if labeled.count == 0:
        return mask
    survives = np.zeros(labeled.count + 1, dtype=bool)
    for i, n in labeled.sizes.items():
        survives[i] = n >= min_voxels
    return Mask(mask.grid, survives[labeled.labels])


def threshold_sweep(
    preds,
    gts,
    thresholds,
    connectivity: int = DEFAULT_CONNECTIVITY,
    case_ids=None,
) -> list[SweepRow]:
    """Filter every prediction at each threshold and aggregate the metrics.

    ``preds`` and ``gts`` are aligned by position. Thresholds must be distinct
    and non-negative; output rows are sorted by ascending threshold.
    """
    preds = list(preds)
    gts = list(gts)
    if len(preds) != len(gts):
        raise ValueError(f"case misalignment: {len(preds)} predictions vs {len(gts)} ground truths")
    if not preds:
        raise ValueError("threshold_sweep requires at least one case")
    if case_ids is None:
        case_ids = [f"case_{i:04d}" for i in range(len(preds))]
    case_ids = list(case_ids)
    if len(case_ids) != len(preds):
        raise ValueError(f"case misalignment: {len(case_ids)} ids vs {len(preds)} predictions")

    ths = [int(t) for t in thresholds]
    if any(t < 0 for t in ths):
        raise ValueError(f"thresholds must be non-negative, got {thresholds}")
    if len(set(ths)) != len(ths):
        raise ValueError(f"thresholds must be distinct, got {thresholds}")

    rows = []
    for t in sorted(ths):
        cases = [
            evaluate_case(cid, filter_min_size(p, t, connectivity), g, connectivity)
            for cid, p, g in zip(case_ids, preds, gts)
        ]
        report = aggregate(cases)
        rows.append(
            SweepRow(
                threshold_voxels=t,
                dice=report.mean_dice,
                fp_volume_ml=report.mean_fp_volume_ml,
                fn_volume_ml=report.mean_fn_volume_ml,
            )
        )
    return rows


def sweep_to_csv(rows) -> str:
    """CSV serialization: threshold_voxels,mean_dice,mean_fp_volume_ml,mean_fn_volume_ml."""
    lines = ["threshold_voxels,mean_dice,mean_fp_volume_ml,mean_fn_volume_ml"]
    for r in rows:
        dice = "" if r.dice is None else repr(r.dice)
        lines.append(f"{r.threshold_voxels},{dice},{r.fp_volume_ml!r},{r.fn_volume_ml!r}")
    return "\n".join(lines) + "\n"
