import numpy as np
import pytest

from lesionkit import Grid3, Mask, Volume


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20230916))


@pytest.fixture
def grid8():
    return Grid3(dims=(8, 8, 8), spacing=(2.0, 2.0, 2.0))


def make_mask(grid: Grid3, coords) -> Mask:
    """Mask with foreground exactly at the given (x, y, z) voxels."""
    bits = np.zeros(grid.dims, dtype=bool, order="F")
    for c in coords:
        bits[tuple(c)] = True
    return Mask(grid, bits)


def random_mask(grid: Grid3, density: float, rng: np.random.Generator) -> Mask:
    return Mask(grid, rng.random(grid.dims) < density)


def ramp_volume(grid: Grid3, coeffs=(0.3, -0.7, 0.11), offset=5.0) -> Volume:
    """Affine-in-world-coordinates volume, exact under trilinear resampling."""
    axes = [
        grid.origin[a] + np.arange(grid.dims[a], dtype=np.float64) * grid.spacing[a]
        for a in range(3)
    ]
    field = (
        offset
        + coeffs[0] * axes[0][:, None, None]
        + coeffs[1] * axes[1][None, :, None]
        + coeffs[2] * axes[2][None, None, :]
    )
    return Volume(grid, field)
