"""PET/CT preprocessing: resampling onto a common grid plus normalization.

The pipeline the toolkit encodes per case:

* CT is resampled (trilinear) onto the PET grid, clipped to percentile bounds
  computed once over the whole dataset, then Z-scored with the dataset
  mean/std of the clipped sample.
* PET is Z-scored with its own per-volume statistics by default; passing
  dataset-level PET stats switches to the global variant.

Resampling maps each output voxel center to world space and samples the
source there; samples outside the source clamp to the nearest edge voxel.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import Grid3, Mask, Volume
from .nifti_io import read_volume

DEFAULT_LO_PCT = 0.5
DEFAULT_HI_PCT = 99.5

_STD_FLOOR = 1e-8


@dataclass(frozen=True)
class DatasetIntensityStats:
    """Global clipping bounds and moments for one modality.

    ``mean``/``std`` are computed over the pooled voxel sample after clipping
    to [clip_lo, clip_hi]; ``std`` is the population standard deviation.
    """

    modality: str
    clip_lo: float
    clip_hi: float
    mean: float
    std: float
    n_voxels_sampled: int
    percentile_lo_pct: float
    percentile_hi_pct: float

    def __post_init__(self):
        if self.clip_lo > self.clip_hi:
            raise ValueError(f"clip_lo {self.clip_lo} > clip_hi {self.clip_hi}")
        if self.std < 0:
            raise ValueError(f"std must be >= 0, got {self.std}")

    def to_json(self) -> str:
        payload = {
            "modality": self.modality,
            "percentile_lo_pct": self.percentile_lo_pct,
            "percentile_hi_pct": self.percentile_hi_pct,
            "clip_lo": self.clip_lo,
            "clip_hi": self.clip_hi,
            "mean": self.mean,
            "std": self.std,
            "n_voxels_sampled": self.n_voxels_sampled,
        }
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetIntensityStats":
        d = json.loads(text)
        return cls(
            modality=d["modality"],
            clip_lo=float(d["clip_lo"]),
            clip_hi=float(d["clip_hi"]),
            mean=float(d["mean"]),
            std=float(d["std"]),
            n_voxels_sampled=int(d["n_voxels_sampled"]),
            percentile_lo_pct=float(d["percentile_lo_pct"]),
            percentile_hi_pct=float(d["percentile_hi_pct"]),
        )


def _source_coords(src: Grid3, target: Grid3, axis: int) -> np.ndarray:
    """Continuous source index of each target voxel center along one axis,
    clamped to the source extent (edge voxels repeat outside)."""
    idx = np.arange(target.dims[axis], dtype=np.float64)
    world = target.origin[axis] + idx * target.spacing[axis]
    u = (world - src.origin[axis]) / src.spacing[axis]
    return np.clip(u, 0.0, src.dims[axis] - 1)


def _resample_array(values: np.ndarray, src: Grid3, target: Grid3, mode: str) -> np.ndarray:
    if mode == "nearest":
        idx = [np.floor(_source_coords(src, target, a) + 0.5).astype(np.int64) for a in range(3)]
        idx = [np.minimum(ix, src.dims[a] - 1) for a, ix in enumerate(idx)]
        return values[np.ix_(*idx)]
    if mode != "trilinear":
        raise ValueError(f"mode must be 'trilinear' or 'nearest', got {mode!r}")

    lo, hi, frac = [], [], []
    for a in range(3):
        u = _source_coords(src, target, a)
        i0 = np.floor(u).astype(np.int64)
        i0 = np.minimum(i0, max(src.dims[a] - 2, 0))
        i1 = np.minimum(i0 + 1, src.dims[a] - 1)
        lo.append(i0)
        hi.append(i1)
        frac.append(u - i0)

    vals = values.astype(np.float64, copy=False)
    out = np.zeros(target.dims, dtype=np.float64)
    for cx in (0, 1):
        wx = frac[0] if cx else 1.0 - frac[0]
        ix = hi[0] if cx else lo[0]
        for cy in (0, 1):
            wy = frac[1] if cy else 1.0 - frac[1]
            iy = hi[1] if cy else lo[1]
            for cz in (0, 1):
                wz = frac[2] if cz else 1.0 - frac[2]
                iz = hi[2] if cz else lo[2]
                w = wx[:, None, None] * wy[None, :, None] * wz[None, None, :]
                out += w * vals[np.ix_(ix, iy, iz)]
    return out


def resample_to_grid(src: Volume, target: Grid3, mode: str = "trilinear") -> Volume:
    """Resample a volume onto ``target``, sampling at output voxel centers.

    An exactly identical target grid is returned as-is (bit-identical values).
    """
    if mode not in ("trilinear", "nearest"):
        raise ValueError(f"mode must be 'trilinear' or 'nearest', got {mode!r}")
    if target == src.grid:
        return Volume(target, src.values)
    return Volume(target, _resample_array(src.values, src.grid, target, mode))


def resample_mask(mask: Mask, target: Grid3) -> Mask:
    """Nearest-neighbor resampling for masks (output stays strictly binary)."""
    if target == mask.grid:
        return Mask(target, mask.bits)
    idx = [np.floor(_source_coords(mask.grid, target, a) + 0.5).astype(np.int64) for a in range(3)]
    idx = [np.minimum(ix, mask.grid.dims[a] - 1) for a, ix in enumerate(idx)]
    return Mask(target, mask.bits[np.ix_(*idx)])


def percentile(values, p: float) -> float:
    """Linear-interpolation percentile over a flat nonempty sample.

    With sorted values v[0..n-1] and rank r = p/100*(n-1), returns
    v[floor(r)] + frac(r) * (v[floor(r)+1] - v[floor(r)]).
    """
    if not 0.0 <= p <= 100.0:
        raise ValueError(f"percentile must be in [0, 100], got {p}")
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("percentile of an empty sample")
    r = p / 100.0 * (v.size - 1)
    lo = int(np.floor(r))
    if lo + 1 >= v.size:
        return float(v[-1])
    return float(v[lo] + (r - lo) * (v[lo + 1] - v[lo]))


def compute_dataset_stats(
    ct_paths,
    lo_pct: float = DEFAULT_LO_PCT,
    hi_pct: float = DEFAULT_HI_PCT,
    stride: int = 1,
    modality: str = "CT",
) -> DatasetIntensityStats:
    """Pool voxels from all listed volumes and derive clip bounds and moments.

    Samples are pooled in file-list order (every ``stride``-th voxel in
    linearization order per file), so the result is deterministic for a fixed
    file list and stride. Unreadable files fail fast with the path named.
    """
    paths = list(ct_paths)
    if not paths:
        raise ValueError("compute_dataset_stats requires at least one volume")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if lo_pct > hi_pct:
        raise ValueError(f"lo_pct {lo_pct} > hi_pct {hi_pct}")

    pooled = np.concatenate(
        [read_volume(p).flat()[::stride].astype(np.float64) for p in paths]
    )
    clip_lo = percentile(pooled, lo_pct)
    clip_hi = percentile(pooled, hi_pct)
    clipped = np.clip(pooled, clip_lo, clip_hi)
    return DatasetIntensityStats(
        modality=modality,
        clip_lo=clip_lo,
        clip_hi=clip_hi,
        mean=float(clipped.mean()),
        std=float(clipped.std()),
        n_voxels_sampled=int(pooled.size),
        percentile_lo_pct=float(lo_pct),
        percentile_hi_pct=float(hi_pct),
    )


def zscore_normalize(vol: Volume, mean: float, std: float) -> Volume:
    """(v - mean) / std per voxel; a degenerate std yields all zeros + warning."""
    if std < 0:
        raise ValueError(f"std must be >= 0, got {std}")
    if std < _STD_FLOOR:
        warnings.warn(
            f"z-score with degenerate std {std:g}; returning all zeros", stacklevel=2
        )
        return Volume(vol.grid, np.zeros(vol.grid.dims, dtype=np.float32, order="F"))
    out = (vol.values.astype(np.float64) - mean) / std
    return Volume(vol.grid, out)


def clip_to_bounds(vol: Volume, lo: float, hi: float) -> Volume:
    if lo > hi:
        raise ValueError(f"clip bounds inverted: {lo} > {hi}")
    return Volume(vol.grid, np.clip(vol.values, np.float32(lo), np.float32(hi)))


class PreprocessedCase(NamedTuple):
    pet_norm: Volume
    ct_norm: Volume


def preprocess_case(
    pet: Volume,
    ct: Volume,
    stats: DatasetIntensityStats,
    pet_stats: DatasetIntensityStats | None = None,
) -> PreprocessedCase:
    """Produce the normalized 2-channel pair on the PET grid.

    CT: trilinear resample onto the PET grid, clip to the dataset bounds,
    Z-score with the dataset moments. PET: per-volume Z-score, or the same
    clip+Z-score pipeline as CT when ``pet_stats`` is given.
    """
    ct_on_pet = resample_to_grid(ct, pet.grid, mode="trilinear")
    ct_norm = zscore_normalize(clip_to_bounds(ct_on_pet, stats.clip_lo, stats.clip_hi), stats.mean, stats.std)

    if pet_stats is None:
        flat = pet.flat().astype(np.float64)
        pet_norm = zscore_normalize(pet, float(flat.mean()), float(flat.std()))
    else:
        pet_norm = zscore_normalize(
            clip_to_bounds(pet, pet_stats.clip_lo, pet_stats.clip_hi), pet_stats.mean, pet_stats.std
        )
    return PreprocessedCase(pet_norm=pet_norm, ct_norm=ct_norm)
