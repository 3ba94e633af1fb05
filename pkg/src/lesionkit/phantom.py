"""Deterministic synthetic PET/CT/ground-truth cases for tests and demos.

Lesions are axis-aligned ellipsoids; a voxel is foreground iff its center
lies inside (the voxel nearest the lesion center is always included, so no
lesion is ever empty). Lesion volumes are therefore analytically known up to
discretization. Placement uses rejection sampling with a separation margin
large enough that components never touch, so labeling the ground truth
always yields exactly n_lesions components.

PET is background plus a constant uptake inside lesions plus seeded Gaussian
noise; CT is a smooth noise-free gradient. The ground truth is exact by
construction because noise is added after painting.

Randomness: one PCG64 generator seeded from spec.seed. Draw order: per
placement attempt, 3 radii then (if the radii fit the volume) 3 center
coordinates; after all lesions are placed, the noise field. Identical specs
give bit-identical cases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Grid3, Mask, Volume

DEFAULT_RADIUS_RANGE_MM = (3.0, 6.0)


class PlacementError(ValueError):
    """Lesion placement could not satisfy the non-overlap/containment rules."""


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters for one synthetic case.

    dims/spacing define the shared PET/CT/gt grid. n_lesions ellipsoids get
    per-axis radii drawn uniformly from lesion_radius_range_mm and centers
    drawn uniformly over positions that keep them fully inside the volume
    and clear of each other.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (2.0, 2.0, 2.0)
    n_lesions: int = 3
    lesion_radius_range_mm: tuple[float, float] = DEFAULT_RADIUS_RANGE_MM
    pet_background_level: float = 1.0
    pet_lesion_uptake: float = 5.0
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        grid = Grid3(dims=self.dims, spacing=self.spacing)  # validates both
        object.__setattr__(self, "dims", grid.dims)
        object.__setattr__(self, "spacing", grid.spacing)
        if self.n_lesions < 0:
            raise ValueError(f"n_lesions must be >= 0, got {self.n_lesions}")
        lo, hi = self.lesion_radius_range_mm
        if not 0 < lo <= hi:
            raise ValueError(
                f"lesion_radius_range_mm must satisfy 0 < lo <= hi, got {(lo, hi)}"
            )
        object.__setattr__(self, "lesion_radius_range_mm", (float(lo), float(hi)))
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    @property
    def grid(self) -> Grid3:
        return Grid3(dims=self.dims, spacing=self.spacing)


@dataclass(frozen=True)
class LesionRecord:
    center_mm: tuple[float, float, float]
    radius_mm: tuple[float, float, float]
    voxels: int


@dataclass(frozen=True)
class PhantomCase:
    pet: Volume
    ct: Volume
    gt: Mask
    lesion_records: tuple[LesionRecord, ...] = field(default=())


def _paint_ellipsoid(bits: np.ndarray, grid: Grid3, center, radii) -> None:
    """Set voxels whose centers fall inside the ellipsoid; always include the
    voxel nearest the center."""
    sl, axes_d2 = [], []
    for a in range(3):
        lo = int(np.ceil((center[a] - radii[a] - grid.origin[a]) / grid.spacing[a]))
        hi = int(np.floor((center[a] + radii[a] - grid.origin[a]) / grid.spacing[a]))
        lo, hi = max(lo, 0), min(hi, grid.dims[a] - 1)
        sl.append(slice(lo, hi + 1))
        coords = grid.origin[a] + np.arange(lo, hi + 1, dtype=np.float64) * grid.spacing[a]
        axes_d2.append(((coords - center[a]) / radii[a]) ** 2)
    if any(s.start > s.stop - 1 for s in sl):
        inside = None
    else:
        inside = (
            axes_d2[0][:, None, None]
            + axes_d2[1][None, :, None]
            + axes_d2[2][None, None, :]
        ) <= 1.0
    if inside is not None:
        bits[tuple(sl)] |= inside
    nearest = tuple(
        int(np.clip(round((center[a] - grid.origin[a]) / grid.spacing[a]), 0, grid.dims[a] - 1))
        for a in range(3)
    )
    bits[nearest] = True


def _smooth_ct(grid: Grid3) -> np.ndarray:
    # Noise-free anatomy stand-in: radial falloff in-plane, gentle gradient
    # along z. Values are arbitrary units, only smoothness matters.
    u = []
    for a in range(3):
        n = grid.dims[a]
        half = max((n - 1) / 2.0, 1.0)
        u.append((np.arange(n, dtype=np.float64) - (n - 1) / 2.0) / half)
    ux, uy, uz = u
    radial = np.exp(-2.0 * (ux[:, None, None] ** 2 + uy[None, :, None] ** 2))
    return 60.0 * radial + 10.0 * uz[None, None, :] + np.zeros(grid.dims)


def generate_phantom(spec: PhantomSpec) -> PhantomCase:
    """Generate one synthetic case; deterministic per spec.

    Raises PlacementError when n_lesions cannot be placed within
    10 * n_lesions rejection attempts.
    """
    grid = spec.grid
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    lo, hi = spec.lesion_radius_range_mm
    margin = 2.0 * max(grid.spacing)
    extent = tuple(grid.origin[a] + (grid.dims[a] - 1) * grid.spacing[a] for a in range(3))

    placed: list[tuple[np.ndarray, np.ndarray]] = []  # (center, radii)
    max_attempts = max(10 * spec.n_lesions, 1)
    attempts = 0
    last_reason = ""
    while len(placed) < spec.n_lesions:
        if attempts >= max_attempts:
            raise PlacementError(
                f"placed {len(placed)} of {spec.n_lesions} lesions in {attempts} attempts; "
                f"last failure: {last_reason}. The volume (extent "
                f"{tuple(round(e - o, 3) for e, o in zip(extent, grid.origin))} mm) is too "
                f"small for radii up to {hi} mm with a {margin} mm separation margin."
            )
        attempts += 1
        radii = rng.uniform(lo, hi, size=3)
        c_lo = np.array([grid.origin[a] + radii[a] for a in range(3)])
        c_hi = np.array([extent[a] - radii[a] for a in range(3)])
        if np.any(c_hi < c_lo):
            last_reason = f"radii {np.round(radii, 3).tolist()} mm do not fit inside the volume"
            continue
        center = rng.uniform(c_lo, c_hi)
        r_max = float(radii.max())
        too_close = False
        for pc, pr in placed:
            if np.linalg.norm(center - pc) <= r_max + float(pr.max()) + margin:
                too_close = True
                break
        if too_close:
            last_reason = "candidate center violates the pairwise separation margin"
            continue
        placed.append((center, radii))

    bits = np.zeros(grid.dims, dtype=bool, order="F")
    records = []
    prev_count = 0
    for center, radii in placed:
        _paint_ellipsoid(bits, grid, center, radii)
        count = int(np.count_nonzero(bits))
        records.append(
            LesionRecord(
                center_mm=tuple(float(c) for c in center),
                radius_mm=tuple(float(r) for r in radii),
                voxels=count - prev_count,
            )
        )
        prev_count = count

    pet = np.full(grid.dims, spec.pet_background_level, dtype=np.float64)
    pet[bits] += spec.pet_lesion_uptake
    if spec.noise_sigma > 0:
        pet += rng.normal(0.0, spec.noise_sigma, size=grid.dims)

    return PhantomCase(
        pet=Volume(grid, pet),
        ct=Volume(grid, _smooth_ct(grid)),
        gt=Mask(grid, bits),
        lesion_records=tuple(records),
    )
