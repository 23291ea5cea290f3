import numpy as np
import pytest

from voxrefine.errors import ShapeError
from voxrefine.fusion.attention import DeformableAttnParams, QuerySet, fuse, guide_queries
from voxrefine.fusion.camera import CameraModel, FeatureMap2D, look_extrinsics
from voxrefine.voxel.grid import GridGeometry
from voxrefine.voxel.sparse import SparseVoxelGrid

# Scale-4 voxels of 1 m, 2.5 .. 5.5 m in front of a camera at the origin
GEOM = GridGeometry((2.0, -2.0, -2.0), 0.25, (16, 16, 16))


def camera(yaw=0.0):
    return CameraModel.from_pinhole(50.0, 50.0, 31.5, 23.5, look_extrinsics((0, 0, 0), yaw),
                                    (64, 48))


@pytest.fixture
def params(rng):
    return DeformableAttnParams(offsets=[[0.5, -0.5], [-1.0, 0.75], [0.0, 0.0]],
                                weight_logits=[0.1, 0.5, -0.3],
                                value_proj=rng.normal(size=(2, 3)),
                                output_proj=rng.normal(size=(3, 3)))


@pytest.fixture
def dense(rng):
    # Voxels at least 3.5 m out project well inside the image
    r = np.arange(4)
    gx, gy, gz = np.meshgrid(np.arange(1, 4), r, r, indexing="ij")
    coords = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    return SparseVoxelGrid(GEOM.at_scale(4), coords, rng.normal(size=(len(coords), 3)))


class TestFuse:
    def test_constant_field(self, params, dense):
        value = np.array([2.0, -1.0])
        rig = [camera()]
        out = fuse(guide_queries(dense, None), rig, FeatureMap2D.constant(rig, value), params)
        expected = dense.features + (value @ params.value_proj) @ params.output_proj
        assert np.array_equal(out.coords, dense.coords)
        assert np.allclose(out.features, expected, atol=1e-12)

    def test_cameras_averaged(self, params, dense):
        one = [camera()]
        two = [camera(), camera()]
        a = fuse(guide_queries(dense, None), one, FeatureMap2D.constant(one, [1.0, 3.0]), params)
        b = fuse(guide_queries(dense, None), two, FeatureMap2D.constant(two, [1.0, 3.0]), params)
        assert np.allclose(a.features, b.features)

    def test_unseen_voxels(self, params, dense):
        rig = [camera(np.pi)]
        maps = FeatureMap2D.constant(rig, [1.0, 1.0])
        stats = {}
        out = fuse(guide_queries(dense, None), rig, maps, params, stats)
        assert out.equals(dense)
        assert stats["misses"] == len(dense)
        params.residual = False
        assert np.all(fuse(guide_queries(dense, None), rig, maps, params).features == 0.0)

    def test_two_point_hand_example(self):
        # one voxel centred on the optical axis, references on pixels 1 and 3
        geom = GridGeometry((3.0, -0.5, -0.5), 0.25, (4, 4, 4))
        voxel = SparseVoxelGrid(geom.at_scale(4), [[0, 0, 0]], [[0.0]])
        fmap = np.zeros((48, 64, 1))
        fmap[22, 30] = 1.0
        fmap[24, 32] = 3.0
        params = DeformableAttnParams(offsets=[[-1.5, -1.5], [0.5, 0.5]],
                                      weight_logits=[0.0, np.log(3.0)],
                                      value_proj=[[1.0]], output_proj=[[1.0]], residual=False)
        assert params.attention_weights() == pytest.approx([0.25, 0.75])
        out = fuse(guide_queries(voxel, None), [camera()], FeatureMap2D([fmap]), params)
        assert out.features[0, 0] == pytest.approx(2.5)

    def test_seeded_params(self, dense):
        rig = [camera()]
        maps = FeatureMap2D([np.random.default_rng(0).normal(size=(48, 64, 4))])
        a = DeformableAttnParams.seeded(4, 3, seed=11, query_conditioned=True)
        b = DeformableAttnParams.seeded(4, 3, seed=11, query_conditioned=True)
        assert np.array_equal(a.offsets, b.offsets)
        qa, qb = guide_queries(dense, 5), guide_queries(dense, 5)
        assert fuse(qa, rig, maps, a).equals(fuse(qb, rig, maps, b))
        assert a.attention_weights().sum() == pytest.approx(1.0)

    def test_shape_checks(self, params, dense):
        rig = [camera()]
        with pytest.raises(ShapeError):
            fuse(guide_queries(dense, None), rig + rig, FeatureMap2D.constant(rig, [1.0, 1.0]),
                 params)
        with pytest.raises(ShapeError):
            fuse(guide_queries(dense, None), rig, FeatureMap2D.constant(rig, [1.0]), params)


class TestQueries:
    def test_zero_base(self, dense):
        q = guide_queries(dense, None)
        assert isinstance(q, QuerySet)
        assert np.all(q.base.features == 0.0)
        assert q.guided.equals(dense)

    def test_seeded_base(self, dense):
        q = guide_queries(dense, 3, std=0.5)
        assert np.allclose(q.guided.features, dense.features + q.base.features)
        assert q.base.features.std() > 0.1
        assert np.array_equal(q.base.features, guide_queries(dense, 3, std=0.5).base.features)

    def test_scale_4_only(self):
        grid = SparseVoxelGrid.empty(GEOM, 3)
        with pytest.raises(ShapeError):
            guide_queries(grid, None)
