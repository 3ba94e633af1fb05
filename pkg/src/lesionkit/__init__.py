"""Whole-body PET/CT lesion segmentation toolkit.

Evaluation metrics (Dice, false-positive/false-negative volumes), connected
component labeling and size-based post-processing, PET/CT preprocessing
(resampling, clipping, Z-score), foreground-oversampled patch sampling,
training-objective reference evaluators, deterministic augmentations, NIfTI-1
I/O, and a synthetic phantom generator. A batch CLI (``lesionkit``) binds the
pieces into a dataset-level workflow.
"""

from .augment import KINDS, AugmentSpec, apply_augment, apply_mirror_mask
from .ccl import (
    CONNECTIVITIES,
    DEFAULT_CONNECTIVITY,
    ComponentStats,
    HistogramBin,
    LabelMap,
    component_stats,
    label_components,
    size_histogram,
)
from .core import (
    SPACING_TOL_MM,
    GeometryMismatchError,
    Grid3,
    Mask,
    Volume,
    overlap_count,
    require_same_geometry,
    voxel_volume_ml,
)
from .losses import (
    ProbField,
    combined_loss,
    cross_entropy_loss,
    poly_lr,
    soft_dice_grad,
    soft_dice_loss,
)
from .metrics import (
    AggregateReport,
    CaseMetrics,
    aggregate,
    dice_score,
    evaluate_case,
    false_negative_volume,
    false_positive_volume,
    report_to_json,
)
from .nifti_io import (
    NiftiFormatError,
    read_header,
    read_mask,
    read_volume,
    write_mask,
    write_volume,
)
from .phantom import LesionRecord, PhantomCase, PhantomSpec, PlacementError, generate_phantom
from .postproc import SweepRow, filter_min_size, sweep_to_csv, threshold_sweep
from .preproc import (
    DatasetIntensityStats,
    PreprocessedCase,
    clip_to_bounds,
    compute_dataset_stats,
    percentile,
    preprocess_case,
    resample_mask,
    resample_to_grid,
    zscore_normalize,
)
from .sampler import Patch, PatchBatch, extract_patch, sample_batch

__version__ = "0.1.0"

__all__ = [
    "AggregateReport",
    "AugmentSpec",
    "CaseMetrics",
    "ComponentStats",
    "CONNECTIVITIES",
    "DEFAULT_CONNECTIVITY",
    "DatasetIntensityStats",
    "GeometryMismatchError",
    "Grid3",
    "HistogramBin",
    "KINDS",
    "LabelMap",
    "LesionRecord",
    "Mask",
    "NiftiFormatError",
    "Patch",
    "PatchBatch",
    "PhantomCase",
    "PhantomSpec",
    "PlacementError",
    "PreprocessedCase",
    "ProbField",
    "SPACING_TOL_MM",
    "SweepRow",
    "Volume",
    "aggregate",
    "apply_augment",
    "apply_mirror_mask",
    "clip_to_bounds",
    "combined_loss",
    "component_stats",
    "compute_dataset_stats",
    "cross_entropy_loss",
    "dice_score",
    "evaluate_case",
    "extract_patch",
    "false_negative_volume",
    "false_positive_volume",
    "filter_min_size",
    "generate_phantom",
    "label_components",
    "overlap_count",
    "percentile",
    "poly_lr",
    "preprocess_case",
    "read_header",
    "read_mask",
    "read_volume",
    "report_to_json",
    "require_same_geometry",
    "resample_mask",
    "resample_to_grid",
    "sample_batch",
    "size_histogram",
    "soft_dice_grad",
    "soft_dice_loss",
    "sweep_to_csv",
    "threshold_sweep",
    "voxel_volume_ml",
    "write_mask",
    "write_volume",
    "zscore_normalize",
    "__version__",
]
