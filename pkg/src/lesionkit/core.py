"""Geometry-aware volume and mask containers shared by every other module.

Conventions, fixed across the whole toolkit:

* Grids are axis-aligned. ``origin`` is the world position (mm) of the
  center of voxel (0, 0, 0) and the center of voxel (x, y, z) sits at
  ``origin + (x, y, z) * spacing``. Orientation metadata beyond this is
  preserved by I/O but never interpreted.
* Linearization order is x-fastest, then y, then z (the NIfTI on-disk
  order). Arrays are stored Fortran-ordered with shape ``dims`` so that
  ``ravel(order="F")`` is exactly that linearization with no copy.
* Voxel data is stored in 32-bit floats; metric accumulation happens in
  64-bit.
* All containers are treated as immutable after construction and are safe
  to share across workers; operations are pure functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Tolerance for spacing/origin equality between grids that are supposed to
# match. Resampled pairs carry float round-off from upstream tools, so exact
# comparison would reject valid data; dims are always compared exactly.
SPACING_TOL_MM = 1e-4


class GeometryMismatchError(ValueError):
    """Two grids that must match do not."""


def _as_triple(name: str, value, cast) -> tuple:
    try:
        items = tuple(cast(v) for v in value)
    except TypeError:
        raise ValueError(f"{name} must be a sequence of 3 values, got {value!r}") from None
    if len(items) != 3:
        raise ValueError(f"{name} must have exactly 3 components, got {value!r}")
    return items


@dataclass(frozen=True)
class Grid3:
    """A 3D voxel grid: per-axis extent, physical spacing, and world origin."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = _as_triple("dims", self.dims, int)
        spacing = _as_triple("spacing", self.spacing, float)
        origin = _as_triple("origin", self.origin, float)
        if any(d < 1 for d in dims):
            raise ValueError(f"dims components must be >= 1, got {dims}")
        if any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise ValueError(f"spacing components must be finite and > 0, got {spacing}")
        if any(not np.isfinite(o) for o in origin):
            raise ValueError(f"origin components must be finite, got {origin}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def n_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def voxel_volume_mm3(self) -> float:
        return self.spacing[0] * self.spacing[1] * self.spacing[2]

    def linearize(self, x: int, y: int, z: int) -> int:
        """Flat index of voxel (x, y, z) in x-fastest order."""
        nx, ny, _ = self.dims
        return x + nx * (y + ny * z)

    def delinearize(self, index: int) -> tuple[int, int, int]:
        """Voxel coordinates for a flat index; inverse of :meth:`linearize`."""
        nx, ny, _ = self.dims
        return index % nx, (index // nx) % ny, index // (nx * ny)

    def voxel_center_mm(self, x: int, y: int, z: int) -> tuple[float, float, float]:
        return (
            self.origin[0] + x * self.spacing[0],
            self.origin[1] + y * self.spacing[1],
            self.origin[2] + z * self.spacing[2],
        )

    def approx_equal(self, other: "Grid3", tol_mm: float = SPACING_TOL_MM) -> bool:
        """Geometry equality: dims exact, spacing/origin within ``tol_mm``."""
        return (
            self.dims == other.dims
            and all(abs(a - b) <= tol_mm for a, b in zip(self.spacing, other.spacing))
            and all(abs(a - b) <= tol_mm for a, b in zip(self.origin, other.origin))
        )


def voxel_volume_ml(grid: Grid3) -> float:
    """Physical volume of one voxel in milliliters (1 mL = 1000 mm^3)."""
    return grid.voxel_volume_mm3 / 1000.0


def require_same_geometry(a: Grid3, b: Grid3, what: str = "operands") -> None:
    if not a.approx_equal(b):
        raise GeometryMismatchError(f"{what} are on different grids: {a} vs {b}")


@dataclass(frozen=True)
class Volume:
    """A scalar 3D image (PET, CT, or probability map) on a :class:`Grid3`.

    ``values`` has shape ``grid.dims``, dtype float32, Fortran order. The
    constructor copies/converts as needed and rejects NaN or infinity.
    """

    grid: Grid3
    values: np.ndarray

    def __post_init__(self):
        arr = np.asfortranarray(self.values, dtype=np.float32)
        if arr.shape != self.grid.dims:
            raise ValueError(f"values shape {arr.shape} does not match grid dims {self.grid.dims}")
        if not np.all(np.isfinite(arr)):
            bad = int(np.count_nonzero(~np.isfinite(arr)))
            raise ValueError(f"volume contains {bad} non-finite values")
        object.__setattr__(self, "values", arr)

    def flat(self) -> np.ndarray:
        """1-D view of the values in linearization order (no copy)."""
        return self.values.ravel(order="F")


@dataclass(frozen=True)
class Mask:
    """A binary 3D mask sharing :class:`Volume` geometry and linearization."""

    grid: Grid3
    bits: np.ndarray

    def __post_init__(self):
        arr = np.asfortranarray(self.bits)
        if arr.dtype != np.bool_:
            arr = arr.astype(np.bool_)
            arr = np.asfortranarray(arr)
        if arr.shape != self.grid.dims:
            raise ValueError(f"bits shape {arr.shape} does not match grid dims {self.grid.dims}")
        object.__setattr__(self, "bits", arr)

    @property
    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def flat(self) -> np.ndarray:
        """1-D view of the bits in linearization order (no copy)."""
        return self.bits.ravel(order="F")


def overlap_count(a: Mask, b: Mask) -> int:
    """Number of voxel positions that are foreground in both masks."""
    require_same_geometry(a.grid, b.grid, "overlap_count masks")
    return int(np.count_nonzero(a.bits & b.bits))
