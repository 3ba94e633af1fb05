import numpy as np
import pytest

from lesionkit import (
    CONNECTIVITIES,
    Grid3,
    Mask,
    component_stats,
    label_components,
    size_histogram,
)

from conftest import make_mask, random_mask
from oracles import flood_fill_label, neighbor_offsets


class TestLabelComponents:
    def test_empty_mask(self, grid8):
        lm = label_components(make_mask(grid8, []))
        assert lm.count == 0
        assert lm.sizes == {}
        assert not lm.labels.any()

    def test_single_voxel(self, grid8):
        lm = label_components(make_mask(grid8, [(3, 4, 5)]))
        assert lm.count == 1
        assert lm.sizes == {1: 1}
        assert lm.labels[3, 4, 5] == 1

    def test_diagonal_26_vs_6(self):
        g = Grid3(dims=(3, 3, 3))
        m = make_mask(g, [(0, 0, 0), (1, 1, 1)])
        assert label_components(m, 26).count == 1
        assert label_components(m, 6).count == 2
        # cross-checked against the flood-fill oracle on the same 27 voxels
        assert flood_fill_label(np.asarray(m.bits), 26).max() == 1
        assert flood_fill_label(np.asarray(m.bits), 6).max() == 2

    def test_invalid_connectivity(self, grid8):
        with pytest.raises(ValueError):
            label_components(make_mask(grid8, [(0, 0, 0)]), 4)

    @pytest.mark.parametrize("connectivity", CONNECTIVITIES)
    @pytest.mark.parametrize("density", [0.05, 0.3, 0.7])
    def test_oracle_equivalence_sample(self, rng, connectivity, density):
        # the full 300-mask sweep lives in the acceptance suite
        for _ in range(4):
            dims = tuple(int(d) for d in rng.integers(2, 17, size=3))
            m = random_mask(Grid3(dims=dims), density, rng)
            got = label_components(m, connectivity)
            want = flood_fill_label(np.asarray(m.bits), connectivity)
            # ids use the same first-encounter raster rule, so arrays match
            assert np.array_equal(got.labels, want)
            assert got.count == int(want.max(initial=0))

    def test_label_determinism(self, rng, grid8):
        m = random_mask(grid8, 0.4, rng)
        a = label_components(m)
        b = label_components(m)
        assert np.array_equal(a.labels, b.labels)
        assert a.sizes == b.sizes

    def test_connectivity_monotonicity(self, rng):
        g = Grid3(dims=(12, 12, 12))
        for density in (0.1, 0.3, 0.5):
            m = random_mask(g, density, rng)
            counts = {c: label_components(m, c).count for c in (6, 18, 26)}
            assert counts[26] <= counts[18] <= counts[6]

    def test_sizes_sum_to_foreground(self, rng, grid8):
        m = random_mask(grid8, 0.35, rng)
        lm = label_components(m)
        assert sum(lm.sizes.values()) == m.foreground_count

    def test_neighbor_offsets_match_oracle(self):
        from lesionkit.ccl import neighbor_offsets as package_offsets

        for conn in CONNECTIVITIES:
            got = {tuple(int(v) for v in row) for row in package_offsets(conn)}
            want = set(neighbor_offsets(conn))
            assert got == want


class TestComponentStats:
    def test_unit_cube_volume(self):
        g = Grid3(dims=(4, 4, 4), spacing=(1.0, 1.0, 1.0))
        m = make_mask(g, [(x, y, z) for x in (1, 2) for y in (1, 2) for z in (1, 2)])
        stats = component_stats(label_components(m))
        assert len(stats) == 1
        assert stats[0].voxels == 8
        assert stats[0].volume_ml == pytest.approx(0.008)
        assert stats[0].centroid_mm == pytest.approx((1.5, 1.5, 1.5))
        assert stats[0].bounding_box == ((1, 2), (1, 2), (1, 2))

    def test_two_components_in_id_order(self):
        g = Grid3(dims=(10, 4, 4))
        m = make_mask(
            g,
            [(0, 0, 0), (1, 0, 0), (2, 0, 0)]  # size 3, encountered first
            + [(6, 2, 2), (7, 2, 2), (6, 3, 2), (7, 3, 2), (6, 2, 3)],  # size 5
        )
        stats = component_stats(label_components(m))
        assert [s.id for s in stats] == [1, 2]
        assert [s.voxels for s in stats] == [3, 5]

    def test_empty(self, grid8):
        assert component_stats(label_components(make_mask(grid8, []))) == []

    def test_centroid_uses_world_coordinates(self):
        g = Grid3(dims=(4, 4, 4), spacing=(2.0, 3.0, 4.0), origin=(10.0, -5.0, 0.5))
        m = make_mask(g, [(1, 1, 1), (3, 1, 1)])
        stats = component_stats(label_components(m, 6))
        # two separate singletons: centroids at the voxel centers
        assert stats[0].centroid_mm == pytest.approx((12.0, -2.0, 4.5))
        assert stats[1].centroid_mm == pytest.approx((16.0, -2.0, 4.5))


class TestSizeHistogram:
    def _stats_with_sizes(self, sizes):
        g = Grid3(dims=(40, 40, 40))
        coords = []
        x0 = 0
        for s in sizes:
            coords.extend((x0, 0, y) for y in range(min(s, 40)))
            extra = s - min(s, 40)
            coords.extend((x0, 1, y) for y in range(extra))
            x0 += 2
        m = make_mask(g, coords)
        return component_stats(label_components(m))

    def test_hand_binning(self):
        stats = self._stats_with_sizes([5, 30, 70])
        bins = size_histogram(stats, [1, 10, 1000, 10000])
        assert [b.count for b in bins] == [1, 2, 0]
        assert (bins[0].lo, bins[0].hi) == (1.0, 10.0)

    def test_empty_stats(self):
        bins = size_histogram([], [1, 10, 100])
        assert [b.count for b in bins] == [0, 0]

    def test_edge_value_goes_to_upper_bin(self):
        stats = self._stats_with_sizes([10])
        bins = size_histogram(stats, [1, 10, 100])
        assert [b.count for b in bins] == [0, 1]

    def test_out_of_range_not_counted(self):
        stats = self._stats_with_sizes([5, 70])
        bins = size_histogram(stats, [10, 50])
        assert [b.count for b in bins] == [0]

    def test_non_monotone_edges_error(self):
        with pytest.raises(ValueError):
            size_histogram([], [1, 10, 10])
        with pytest.raises(ValueError):
            size_histogram([], [5])
