"""Seeded, deterministic intensity and mirroring augmentations.

Every augmentation is a pure function of (volume, spec): the random stream is
a PCG64 generator seeded from ``spec.seed`` alone, created fresh per call, so
identical inputs give bit-identical outputs on every platform. Only
``gaussian_noise`` consumes randomness. Magnitudes are toolkit defaults, not
values taken from any particular training recipe.

Geometric augmentation is limited to axis mirroring; rotation and scaling are
out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Grid3, Mask, Volume
from .preproc import resample_to_grid

KINDS = (
    "gaussian_noise",
    "gaussian_blur",
    "gamma",
    "brightness",
    "contrast",
    "mirror",
    "low_resolution",
)


@dataclass(frozen=True)
class AugmentSpec:
    """One augmentation instance. Only the fields of the chosen kind matter.

    kind:             gaussian_noise | gaussian_blur | gamma | brightness |
                      contrast | mirror | low_resolution
    sigma:            noise standard deviation (gaussian_noise)
    sigma_mm:         blur width in mm, converted to voxels per axis (gaussian_blur)
    gamma:            exponent applied to min-max-normalized intensities (gamma)
    delta:            additive offset (brightness)
    factor:           scaling about the volume mean (contrast)
    axes:             subset of (0, 1, 2) to reverse (mirror)
    scale:            downsampling factor in (0, 1] (low_resolution)
    seed:             64-bit seed for the augmentation's random stream
    """

    kind: str
    sigma: float = 0.0
    sigma_mm: float = 0.0
    gamma: float = 1.0
    delta: float = 0.0
    factor: float = 1.0
    axes: tuple[int, ...] = ()
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown augmentation kind {self.kind!r}, expected one of {KINDS}")
        if self.sigma < 0 or self.sigma_mm < 0:
            raise ValueError("noise/blur sigma must be >= 0")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.factor <= 0:
            raise ValueError(f"contrast factor must be > 0, got {self.factor}")
        if not 0.0 < self.scale <= 1.0:
            raise ValueError(f"low_resolution scale must be in (0, 1], got {self.scale}")
        axes = tuple(int(a) for a in self.axes)
        if any(a not in (0, 1, 2) for a in axes) or len(set(axes)) != len(axes):
            raise ValueError(f"axes must be a subset of (0, 1, 2), got {self.axes}")
        object.__setattr__(self, "axes", axes)


def _gaussian_kernel(sigma_vox: float) -> np.ndarray:
    # Truncated at 3 sigma, normalized to sum 1.
    radius = int(3.0 * sigma_vox + 0.5)
    if radius == 0:
        return np.ones(1, dtype=np.float64)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma_vox) ** 2)
    return k / k.sum()


def _convolve_axis_edge(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Separable 1-D convolution with clamp-to-edge padding (float64)."""
    if kernel.size == 1:
        return arr
    radius = (kernel.size - 1) // 2
    pad = [(0, 0)] * 3
    pad[axis] = (radius, radius)
    padded = np.pad(arr, pad, mode="edge")
    out = np.zeros(arr.shape, dtype=np.float64)
    for i, w in enumerate(kernel):
        sl = [slice(None)] * 3
        sl[axis] = slice(i, i + arr.shape[axis])
        out += w * padded[tuple(sl)]
    return out


def _blur(vol: Volume, sigma_mm: float) -> np.ndarray:
    out = vol.values.astype(np.float64)
    for axis in range(3):
        kernel = _gaussian_kernel(sigma_mm / vol.grid.spacing[axis])
        out = _convolve_axis_edge(out, kernel, axis)
    return out


def _gamma_map(values: np.ndarray, g: float) -> np.ndarray:
    # Min-max normalize so the power is defined for negative intensities
    # (post-Z-score data), then restore the original range.
    v = values.astype(np.float64)
    mn, mx = float(v.min()), float(v.max())
    if mx - mn <= 0:
        return v
    return ((v - mn) / (mx - mn)) ** g * (mx - mn) + mn


def _low_resolution_grid(grid: Grid3, scale: float) -> Grid3:
    # The coarse grid keeps the first and last voxel centers in place, so a
    # down/up round trip is pure interpolation (no edge clamping) and affine
    # signals survive exactly.
    dims, spacing = [], []
    for a in range(3):
        n = grid.dims[a]
        if n == 1:
            dims.append(1)
            spacing.append(grid.spacing[a])
            continue
        nd = max(2, int(round(n * scale)))
        dims.append(nd)
        spacing.append((n - 1) * grid.spacing[a] / (nd - 1))
    return Grid3(dims=tuple(dims), spacing=tuple(spacing), origin=grid.origin)


def apply_augment(vol: Volume, spec: AugmentSpec) -> Volume:
    """Apply one augmentation; deterministic for identical (vol, spec)."""
    if spec.kind == "gaussian_noise":
        if spec.sigma == 0:
            return Volume(vol.grid, vol.values)
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        noise = rng.normal(0.0, spec.sigma, size=vol.grid.dims)
        return Volume(vol.grid, vol.values + noise.astype(np.float32))
    if spec.kind == "gaussian_blur":
        if spec.sigma_mm == 0:
            return Volume(vol.grid, vol.values)
        return Volume(vol.grid, _blur(vol, spec.sigma_mm))
    if spec.kind == "gamma":
        return Volume(vol.grid, _gamma_map(vol.values, spec.gamma))
    if spec.kind == "brightness":
        return Volume(vol.grid, vol.values + np.float32(spec.delta))
    if spec.kind == "contrast":
        mean = float(vol.flat().astype(np.float64).mean())
        return Volume(vol.grid, mean + spec.factor * (vol.values.astype(np.float64) - mean))
    if spec.kind == "mirror":
        if not spec.axes:
            return Volume(vol.grid, vol.values)
        return Volume(vol.grid, np.flip(vol.values, axis=spec.axes))
    if spec.kind == "low_resolution":
        coarse = _low_resolution_grid(vol.grid, spec.scale)
        down = resample_to_grid(vol, coarse, mode="trilinear")
        return resample_to_grid(down, vol.grid, mode="trilinear")
    raise AssertionError(f"unhandled kind {spec.kind}")  # AugmentSpec validates kind


def apply_mirror_mask(mask: Mask, axes) -> Mask:
    """Mirror a label mask on the same axes as its image."""
    axes = tuple(int(a) for a in axes)
    if any(a not in (0, 1, 2) for a in axes) or len(set(axes)) != len(axes):
        raise ValueError(f"axes must be a subset of (0, 1, 2), got {axes}")
    if not axes:
        return Mask(mask.grid, mask.bits)
    return Mask(mask.grid, np.flip(mask.bits, axis=axes))
