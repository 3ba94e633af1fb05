"""Foreground-oversampled patch extraction for training pipelines.

A batch of B patches with oversample fraction f contains ceil(f*B) patches
forced onto lesion voxels: a foreground voxel is drawn uniformly over the
whole label and the patch is centered on it. The remaining patches get
uniform random corners. With the default f=0.5 and B=2 this forces exactly
one of the two patches onto foreground.

Windows that extend past the volume are padded: zeros for images, background
for labels. Corners may therefore be negative.

Randomness comes from a PCG64 generator seeded per call. Draw order, fixed
for reproducibility: patch slots are filled in order, forced slots first;
each forced slot consumes one integer (foreground voxel index), each uniform
slot consumes three (corner x, y, z).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import Mask, Volume, require_same_geometry


def _as_patch_size(patch_size) -> tuple[int, int, int]:
    if isinstance(patch_size, (int, np.integer)):
        patch_size = (patch_size,) * 3
    ps = tuple(int(p) for p in patch_size)
    if len(ps) != 3 or any(p < 1 for p in ps):
        raise ValueError(f"patch_size must be 3 positive integers, got {patch_size!r}")
    return ps


@dataclass(frozen=True)
class Patch:
    """One extracted window: image channels, label, and provenance."""

    channels: tuple[np.ndarray, ...]
    label: np.ndarray
    corner: tuple[int, int, int]
    contains_foreground: bool


@dataclass(frozen=True)
class PatchBatch:
    patches: tuple[Patch, ...]
    patch_size: tuple[int, int, int]
    seed: int

    @property
    def n_foreground(self) -> int:
        return sum(1 for p in self.patches if p.contains_foreground)


def _window(arr: np.ndarray, corner, patch_size, fill) -> np.ndarray:
    """Copy the window at corner, padding out-of-range voxels with fill."""
    out = np.full(patch_size, fill, dtype=arr.dtype, order="F")
    src_sl, dst_sl = [], []
    for a in range(3):
        lo, hi = corner[a], corner[a] + patch_size[a]
        slo, shi = max(lo, 0), min(hi, arr.shape[a])
        if slo >= shi:
            return out  # window entirely outside on this axis
        src_sl.append(slice(slo, shi))
        dst_sl.append(slice(slo - lo, shi - lo))
    out[tuple(dst_sl)] = arr[tuple(src_sl)]
    return out


def extract_patch(image, label: Mask, corner, patch_size) -> Patch:
    """Extract one window from image channel(s) and the label mask.

    image may be a single Volume or a sequence of Volumes (channels), all on
    the label's grid. corner is the window's low voxel index per axis and may
    be negative or beyond the volume; padding fills the difference.
    """
    channels = (image,) if isinstance(image, Volume) else tuple(image)
    if not channels:
        raise ValueError("at least one image channel required")
    for ch in channels:
        require_same_geometry(ch.grid, label.grid)
    ps = _as_patch_size(patch_size)
    dims = label.grid.dims
    for a in range(3):
        # guard against typo-scale requests; padding is for borders, not this
        if ps[a] > 4 * dims[a]:
            raise ValueError(
                f"patch_size[{a}]={ps[a]} exceeds 4x volume dim {dims[a]}"
            )
    corner = tuple(int(c) for c in corner)
    if len(corner) != 3:
        raise ValueError(f"corner must be 3 integers, got {corner!r}")
    chan_arrays = tuple(_window(ch.values, corner, ps, 0.0) for ch in channels)
    label_patch = _window(label.bits, corner, ps, False)
    return Patch(
        channels=chan_arrays,
        label=label_patch,
        corner=corner,
        contains_foreground=bool(label_patch.any()),
    )


def _uniform_corner(rng: np.random.Generator, dims, ps) -> tuple[int, int, int]:
    corner = []
    for a in range(3):
        span = dims[a] - ps[a]
        if span >= 0:
            corner.append(int(rng.integers(0, span + 1)))
        else:
            # patch larger than the volume: center it (consumes a draw so the
            # stream layout stays one-integer-per-axis regardless of shape)
            rng.integers(0, 1)
            corner.append(span // 2)
    return tuple(corner)


def sample_batch(
    image,
    label: Mask,
    patch_size,
    batch_size: int,
    oversample_fraction: float = 0.5,
    seed: int = 0,
) -> PatchBatch:
    """Draw a batch with ceil(oversample_fraction * batch_size) forced patches.

    Forced patches are centered on a uniformly drawn foreground voxel
    (corner = voxel - patch_size // 2). If the label has no foreground the
    forced draws fall back to uniform corners and a warning is emitted.
    Deterministic given seed.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if not 0.0 <= oversample_fraction <= 1.0:
        raise ValueError(f"oversample_fraction must be in [0, 1], got {oversample_fraction}")
    ps = _as_patch_size(patch_size)
    dims = label.grid.dims
    n_forced = math.ceil(oversample_fraction * batch_size)

    fg_lin = np.flatnonzero(label.flat())
    if n_forced > 0 and fg_lin.size == 0:
        warnings.warn(
            "label has no foreground; forced patches fall back to uniform corners",
            stacklevel=2,
        )
    rng = np.random.Generator(np.random.PCG64(seed))

    patches = []
    for slot in range(batch_size):
        if slot < n_forced and fg_lin.size > 0:
            voxel = label.grid.delinearize(int(fg_lin[rng.integers(0, fg_lin.size)]))
            corner = tuple(voxel[a] - ps[a] // 2 for a in range(3))
        else:
            corner = _uniform_corner(rng, dims, ps)
        patches.append(extract_patch(image, label, corner, ps))
    return PatchBatch(patches=tuple(patches), patch_size=ps, seed=int(seed))
