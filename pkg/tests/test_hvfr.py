import numpy as np
import pytest

from voxrefine.errors import ShapeError
from voxrefine.fusion.camera import FeatureMap2D, ring_rig
from voxrefine.fusion.densify import MultiScaleFeatures, densify
from voxrefine.generation.scene import random_scene
from voxrefine.lidar.backbone import LidarBackbone
from voxrefine.occlusion.labels import non_empty_mask
from voxrefine.lidar.sparse_conv import SparseConvSpec
from voxrefine.refine.hvfr import (ChildGather, HierarchicalRefiner, ImportanceMap, estimate_importance,
                                   foreground_fractions, fuse_refined, gather_fine,
                                   gather_semi_fine, occupancy_fraction_scorer, select_sets)
from voxrefine.voxel.grid import GridGeometry, align_coords
from voxrefine.voxel.sparse import SparseVoxelGrid, pack_keys

WIDTHS = {1: 8, 2: 8, 4: 16, 8: 16, 16: 16}
IMAGE_CHANNELS = 4


@pytest.fixture
def stage_inputs(small_geom, small_cloud):
    # (fm, lidar, rig, maps) on the 4 m test cube
    lidar = LidarBackbone(small_geom, WIDTHS, seed=0)(small_cloud)
    fm = densify(MultiScaleFeatures({s: lidar[s] for s in (4, 8, 16)}))
    rig = ring_rig(4, image_size=(16, 12), position=(2.0, 2.0, 2.0))
    maps = FeatureMap2D.constant(rig, np.linspace(-1.0, 1.0, IMAGE_CHANNELS))
    return fm, lidar, rig, maps


def refiner(tau1=0.4, tau2=0.7, seed=0):
    return HierarchicalRefiner(WIDTHS[4], WIDTHS[2], WIDTHS[1], IMAGE_CHANNELS, seed, tau1, tau2)


def importance(geom4, scores):
    coords = np.argwhere(np.ones(geom4.dims, dtype=bool))[:len(scores)]
    return ImportanceMap.from_scores(SparseVoxelGrid(geom4, coords, np.zeros((len(coords), 1))),
                                     scores)


def random_grid(geom, n, channels, rng):
    flat = rng.choice(int(np.prod(geom.dims)), size=n, replace=False)
    coords = np.stack(np.unravel_index(flat, geom.dims), axis=1)
    return SparseVoxelGrid(geom, coords, rng.normal(size=(n, channels)))


def dense_strided(dense, occupied, spec):
    # 2x2x2 stride-2 conv of a dense (X, Y, Z, C) volume, output only where
    # the block holds an occupied cell
    X, Y, Z, C = dense.shape
    blocks = dense.reshape(X // 2, 2, Y // 2, 2, Z // 2, 2, C)
    out = np.einsum("xaybzci,abcio->xyzo", blocks, spec.weights) + spec.bias
    occ = occupied.reshape(X // 2, 2, Y // 2, 2, Z // 2, 2).any(axis=(1, 3, 5))
    out[~occ] = 0.0
    return out, occ


class TestSelection:
    def test_thresholds(self, small_geom):
        R = importance(small_geom.at_scale(4), [0.1, 0.4, 0.5, 0.7, 0.9])
        sets = select_sets(R, 0.4, 0.7)
        assert len(sets.semi_fine) == 4
        assert len(sets.fine) == 2
        assert sets.fine_set() <= sets.semi_fine_set()

    def test_above_one_selects_nothing(self, small_geom):
        sets = select_sets(importance(small_geom.at_scale(4), [0.0, 1.0]), 1.01, 1.01)
        assert sets.empty

    def test_scores_validated(self, small_geom):
        with pytest.raises(ValueError):
            importance(small_geom.at_scale(4), [0.5, 1.5])
        grid = SparseVoxelGrid(small_geom.at_scale(4), [[0, 0, 0]], [[0.5, 0.5]])
        with pytest.raises(ShapeError):
            ImportanceMap(grid)

    def test_scores_in_unit_interval(self, stage_inputs):
        fm = stage_inputs[0]
        R = estimate_importance(fm, refiner().rie)
        assert np.array_equal(R.coords, fm.coords)
        assert np.all((R.scores > 0.0) & (R.scores < 1.0))


class TestGather:
    def test_child_counts(self, stage_inputs):
        fm, lidar, rig, maps = stage_inputs
        ref = refiner()
        parents = fm.coords[:3]
        semi = gather_semi_fine(parents, lidar[2], rig, maps, ref.semi_gather)
        fine = gather_fine(parents, lidar[1], rig, maps, ref.fine_gather)
        assert len(semi) == 8 * len(parents)
        assert len(fine) == 64 * len(parents)
        assert semi.scale == 2 and fine.scale == 1
        assert semi.channels == fine.channels == WIDTHS[4]
        parent_keys = pack_keys(parents)
        assert np.all(np.isin(pack_keys(align_coords(semi.coords, 2, 4)), parent_keys))
        assert np.all(np.isin(pack_keys(align_coords(fine.coords, 1, 4)), parent_keys))

    def test_wrong_scale(self, stage_inputs):
        fm, lidar, rig, maps = stage_inputs
        with pytest.raises(ShapeError):
            gather_fine(fm.coords[:1], lidar[2], rig, maps, refiner().fine_gather)


class TestGatherWeights:
    def test_identity_map_concatenates(self, stage_inputs):
        fm, lidar, rig, maps = stage_inputs
        n = WIDTHS[2] + IMAGE_CHANNELS
        gather = ChildGather.from_weights(np.eye(n), np.zeros(n), WIDTHS[2])
        semi = gather_semi_fine(fm.coords, lidar[2], rig, maps, gather)
        assert semi.channels == n
        assert np.array_equal(semi.features[:, :WIDTHS[2]], lidar[2].gather(semi.coords))
        image = semi.features[:, WIDTHS[2]:]
        value = np.linspace(-1.0, 1.0, IMAGE_CHANNELS)
        seen = np.all(np.isclose(image, value), axis=1)
        assert np.any(seen)
        assert np.all(seen | np.all(image == 0.0, axis=1))

    def test_absent_unseen_child_is_bias(self, small_geom, rng):
        weights = rng.normal(size=(WIDTHS[1] + IMAGE_CHANNELS, 5))
        bias = rng.normal(size=5)
        gather = ChildGather.from_weights(weights, bias, WIDTHS[1])
        # cameras 100 m away looking out of the cube
        rig = ring_rig(1, image_size=(16, 12), position=(100.0, 100.0, 100.0))
        maps = FeatureMap2D.constant(rig, np.ones(IMAGE_CHANNELS))
        empty = SparseVoxelGrid.empty(small_geom, WIDTHS[1])
        fine = gather_fine(np.array([[1, 2, 3]]), empty, rig, maps, gather)
        assert len(fine) == 64
        assert np.allclose(fine.features, bias)

    def test_children_off_a_ragged_grid(self):
        # 10 cells in x: scale-4 voxel x=2 has 1 of 2 scale-2 and 2 of 4
        # scale-1 child columns inside the grid
        geom = GridGeometry((0.0, 0.0, 0.0), 1.0, (10, 8, 8))
        n = WIDTHS[1] + IMAGE_CHANNELS
        gather = ChildGather.from_weights(np.eye(n), np.zeros(n), WIDTHS[1])
        parents = np.array([[2, 0, 0], [0, 0, 0]])
        fine = gather_fine(parents, SparseVoxelGrid.empty(geom, WIDTHS[1]), [], None, gather)
        assert len(fine) == 64 + 32
        assert np.all(geom.contains(fine.coords))
        semi = gather_semi_fine(parents, SparseVoxelGrid.empty(geom.at_scale(2), WIDTHS[1]),
                                [], None, gather)
        assert len(semi) == 8 + 4


class TestFuseRefined:
    def test_zero_convs_leave_fm(self, small_geom, rng):
        C = 6
        fine = random_grid(small_geom, 200, C, rng)
        semi = random_grid(small_geom.at_scale(2), 40, C, rng)
        fm = random_grid(small_geom.at_scale(4), 30, C, rng)
        zero = SparseConvSpec.zeros(C, C, kernel_extent=2, stride=2)
        assert fuse_refined(fine, semi, fm, zero, zero).equals(fm)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_dense(self, small_geom, seed):
        rng = np.random.default_rng(seed)
        C = 6
        fine = random_grid(small_geom, 300, C, rng)
        semi = random_grid(small_geom.at_scale(2), 60, C, rng)
        fm = random_grid(small_geom.at_scale(4), 40, C, rng)
        sconv1 = SparseConvSpec.seeded(C, C, seed, kernel_extent=2, stride=2)
        sconv2 = SparseConvSpec.seeded(C, C, seed + 100, kernel_extent=2, stride=2)

        mid, mid_occ = dense_strided(fine.to_dense(), fine.occupancy_mask(), sconv1)
        mid = mid + semi.to_dense()
        mid_occ = mid_occ | semi.occupancy_mask()
        refined, _ = dense_strided(mid, mid_occ, sconv2)
        c = fm.coords
        expected = fm.features + refined[c[:, 0], c[:, 1], c[:, 2]]

        fe = fuse_refined(fine, semi, fm, sconv1, sconv2)
        assert np.array_equal(fe.coords, fm.coords)
        assert np.max(np.abs(fe.features - expected)) < 1e-5


class TestRefiner:
    def test_output_on_fm_coordinates(self, stage_inputs):
        fm, lidar, rig, maps = stage_inputs
        stats = {}
        fe, R, sets = refiner(0.0, 0.5)(fm, lidar, rig, maps, stats=stats)
        assert np.array_equal(fe.coords, fm.coords)
        assert fe.channels == fm.channels
        assert len(sets.semi_fine) == len(fm)
        assert stats["semi_children"] == 8 * len(fm)
        assert not fe.equals(fm)

    def test_residual_identity(self, stage_inputs):
        fm, lidar, rig, maps = stage_inputs
        stats = {}
        fe, _, sets = refiner(1.01, 1.01)(fm, lidar, rig, maps, stats=stats)
        assert sets.empty
        assert stats["residual_identity"]
        assert fe.equals(fm)

    def test_fuse_refined_shape_checks(self, stage_inputs):
        fm, lidar, _, _ = stage_inputs
        ref = refiner()
        with pytest.raises(ShapeError):
            fuse_refined(lidar[2], lidar[2], fm, ref.sconv1, ref.sconv2)

    def test_deterministic(self, stage_inputs):
        fm, lidar, rig, maps = stage_inputs
        a, _, _ = refiner(seed=2)(fm, lidar, rig, maps)
        b, _, _ = refiner(seed=2)(fm, lidar, rig, maps)
        assert a.equals(b)


class TestForegroundConcentration:
    def test_oracle_scorer(self):
        occupied = np.zeros((8, 4, 4), dtype=bool)
        occupied[0:4, :, 0:2] = True
        occupied[4:8, :, :] = True
        score = occupancy_fraction_scorer(occupied)
        assert score(np.array([[0, 0, 0], [1, 0, 0]])).tolist() == [0.5, 1.0]

    @pytest.mark.parametrize("seed", range(50))
    def test_strictly_increasing(self, seed):
        scene = random_scene(seed)
        geom4 = scene.geometry.at_scale(4)
        coords = np.argwhere(np.ones(geom4.dims, dtype=bool))
        scorer = occupancy_fraction_scorer(non_empty_mask(scene.gt))
        grid = SparseVoxelGrid(geom4, coords, np.zeros((len(coords), 1)))
        R = estimate_importance(grid, scorer=scorer)
        sets = select_sets(R, 0.4, 0.7)
        f = foreground_fractions(R, sets, scorer)
        assert f["coarse"] < f["semi_fine"] < f["fine"]
