import numpy as np
import pytest

from lesionkit import Grid3, Mask, Volume, extract_patch, sample_batch

from conftest import make_mask, ramp_volume


@pytest.fixture
def case(rng):
    g = Grid3(dims=(20, 18, 16), spacing=(2.0, 2.0, 2.0))
    img = Volume(g, rng.normal(size=g.dims))
    lbl = make_mask(g, [(10, 10, 10)])
    return img, lbl


class TestExtractPatch:
    def test_whole_volume(self, case):
        img, lbl = case
        p = extract_patch(img, lbl, corner=(0, 0, 0), patch_size=img.grid.dims)
        assert np.array_equal(p.channels[0], img.values)
        assert np.array_equal(p.label, lbl.bits)
        assert p.contains_foreground

    def test_corner_shift_pads_with_zeros(self):
        g = Grid3(dims=(6, 6, 6))
        vol = ramp_volume(g)
        lbl = make_mask(g, [])
        p = extract_patch(vol, lbl, corner=(-1, 0, 0), patch_size=4)
        # plane x=0 of the patch falls outside the volume
        assert np.all(p.channels[0][0] == 0.0)
        assert np.array_equal(p.channels[0][1:4], vol.values[0:3, 0:4, 0:4])
        assert np.all(~p.label[0])
        assert not p.contains_foreground

    def test_fully_outside(self, case):
        img, lbl = case
        p = extract_patch(img, lbl, corner=(100, 100, 100), patch_size=4)
        assert np.all(p.channels[0] == 0.0)
        assert not p.contains_foreground

    def test_multi_channel(self, case, rng):
        img, lbl = case
        ct = Volume(img.grid, rng.normal(size=img.grid.dims))
        p = extract_patch([img, ct], lbl, corner=(2, 2, 2), patch_size=8)
        assert len(p.channels) == 2
        assert np.array_equal(p.channels[1], ct.values[2:10, 2:10, 2:10])

    def test_patch_far_exceeding_volume_rejected(self, case):
        img, lbl = case
        with pytest.raises(ValueError):
            extract_patch(img, lbl, corner=(0, 0, 0), patch_size=(96, 4, 4))

    def test_geometry_mismatch(self, case):
        img, lbl = case
        other = Volume(Grid3(dims=img.grid.dims, spacing=(1.0, 1.0, 1.0)),
                       np.zeros(img.grid.dims))
        with pytest.raises(ValueError):
            extract_patch(other, lbl, corner=(0, 0, 0), patch_size=4)

    def test_foreground_flag_matches_label(self, case):
        img, lbl = case
        p = extract_patch(img, lbl, corner=(8, 8, 8), patch_size=4)
        assert p.contains_foreground == bool(p.label.any())
        assert p.contains_foreground
        q = extract_patch(img, lbl, corner=(0, 0, 0), patch_size=4)
        assert not q.contains_foreground


class TestSampleBatch:
    def test_invalid_args(self, case):
        img, lbl = case
        with pytest.raises(ValueError):
            sample_batch(img, lbl, patch_size=8, batch_size=0)
        with pytest.raises(ValueError):
            sample_batch(img, lbl, patch_size=8, batch_size=2, oversample_fraction=1.5)
        with pytest.raises(ValueError):
            sample_batch(img, lbl, patch_size=8, batch_size=2, oversample_fraction=-0.1)

    def test_single_voxel_forces_known_corner(self, case):
        # lone foreground voxel at (10, 10, 10), patch 8 -> corner (6, 6, 6)
        img, lbl = case
        batch = sample_batch(img, lbl, patch_size=8, batch_size=2,
                             oversample_fraction=1.0, seed=0)
        for p in batch.patches:
            assert p.corner == (6, 6, 6)
            assert p.contains_foreground

    def test_forced_count_is_ceiling(self, case):
        img, lbl = case
        # ceil(1/3 * 2) = 1 forced patch
        batch = sample_batch(img, lbl, patch_size=8, batch_size=2,
                             oversample_fraction=1 / 3, seed=7)
        assert batch.patches[0].corner == (6, 6, 6)
        assert batch.patches[0].contains_foreground

    def test_fraction_zero_no_forcing(self, case):
        img, lbl = case
        batch = sample_batch(img, lbl, patch_size=8, batch_size=16,
                             oversample_fraction=0.0, seed=3)
        assert len(batch.patches) == 16
        assert batch.n_foreground >= 0  # property computes without error

    def test_deterministic(self, case):
        img, lbl = case
        a = sample_batch(img, lbl, patch_size=8, batch_size=6,
                         oversample_fraction=0.5, seed=11)
        b = sample_batch(img, lbl, patch_size=8, batch_size=6,
                         oversample_fraction=0.5, seed=11)
        assert [p.corner for p in a.patches] == [p.corner for p in b.patches]
        for pa, pb in zip(a.patches, b.patches):
            assert np.array_equal(pa.channels[0], pb.channels[0])
        c = sample_batch(img, lbl, patch_size=8, batch_size=6,
                         oversample_fraction=0.5, seed=12)
        assert [p.corner for p in a.patches] != [p.corner for p in c.patches]

    def test_uniform_corners_in_bounds(self, case):
        img, lbl = case
        batch = sample_batch(img, lbl, patch_size=8, batch_size=32,
                             oversample_fraction=0.0, seed=5)
        for p in batch.patches:
            for c, d in zip(p.corner, img.grid.dims):
                assert 0 <= c <= d - 8

    def test_patch_larger_than_volume_centered(self):
        g = Grid3(dims=(6, 6, 6))
        img = Volume(g, np.ones(g.dims))
        lbl = make_mask(g, [])
        batch = sample_batch(img, lbl, patch_size=8, batch_size=3,
                             oversample_fraction=0.0, seed=1)
        for p in batch.patches:
            assert p.corner == (-1, -1, -1)

    def test_empty_label_falls_back_with_warning(self, case):
        img, _ = case
        empty = make_mask(img.grid, [])
        with pytest.warns(UserWarning, match="foreground"):
            batch = sample_batch(img, empty, patch_size=8, batch_size=4,
                                 oversample_fraction=0.5, seed=2)
        assert len(batch.patches) == 4
        assert batch.n_foreground == 0

    def test_flags_consistent(self, case, rng):
        img, _ = case
        bits = rng.random(img.grid.dims) < 0.02
        lbl = Mask(img.grid, bits)
        batch = sample_batch(img, lbl, patch_size=6, batch_size=20,
                             oversample_fraction=0.4, seed=9)
        for p in batch.patches:
            assert p.contains_foreground == bool(p.label.any())
        assert batch.n_foreground == sum(p.contains_foreground for p in batch.patches)
        # forced patches (first ceil(0.4*20) = 8) all contain foreground
        for p in batch.patches[:8]:
            assert p.contains_foreground
