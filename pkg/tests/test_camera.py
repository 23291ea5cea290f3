import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from voxrefine.errors import ShapeError
from voxrefine.fusion.camera import (CameraModel, FeatureMap2D, backproject, bilinear_sample,
                                     gather_image_features, look_extrinsics, pixel_rays, project,
                                     project_points, ring_rig, roundtrip_check, sample_points,
                                     visible_cameras)


@pytest.fixture
def forward_camera():
    # At the origin looking down +x
    return CameraModel.from_pinhole(50.0, 50.0, 31.5, 23.5, look_extrinsics((0, 0, 0), 0.0),
                                    (64, 48))


class TestProjection:
    def test_optical_axis_hits_principal_point(self, forward_camera):
        u, v, depth = project(forward_camera, [5.0, 0.0, 0.0])
        assert (u, v, depth) == pytest.approx((31.5, 23.5, 5.0))

    def test_image_axes(self, forward_camera):
        # World +y is image left, world +z is image up
        u, v, _ = project(forward_camera, [5.0, 1.0, 1.0])
        assert u < 31.5 and v < 23.5

    def test_behind_and_outside(self, forward_camera):
        assert project(forward_camera, [-5.0, 0.0, 0.0]) is None
        assert project(forward_camera, [1.0, 10.0, 0.0]) is None

    @pytest.mark.parametrize("point", [[5.0, 0.3, 1.2], [12.0, -2.0, -0.5], [3.0, 1.1, 0.2]])
    def test_roundtrip(self, point):
        rig = ring_rig(6, position=(0.0, 0.0, 1.5))
        cams = [cam for cam in rig if project(cam, point) is not None]
        assert cams
        for cam in cams:
            assert roundtrip_check(cam, point) < 1e-4

    def test_roundtrip_random_rigs(self):
        rng = np.random.default_rng(3)
        rotations = Rotation.random(1000, random_state=4).as_matrix()
        for R in rotations:
            ext = np.eye(4)
            ext[:3, :3] = R
            ext[:3, 3] = rng.uniform(-20.0, 20.0, size=3)
            W, H = int(rng.integers(16, 1600)), int(rng.integers(16, 900))
            f = rng.uniform(0.3, 2.0) * W
            cam = CameraModel.from_pinhole(f, f * rng.uniform(0.9, 1.1), rng.uniform(0.3, 0.7) * W,
                                           rng.uniform(0.3, 0.7) * H, ext, (W, H))
            u, v = rng.uniform(0.5, W - 0.5), rng.uniform(0.5, H - 0.5)
            p = backproject(cam, u, v, rng.uniform(0.5, 80.0))
            assert roundtrip_check(cam, p) < 1e-4
            uu, vv, depth = project(cam, p)
            assert np.allclose(backproject(cam, uu, vv, depth), p, atol=1e-6)

    def test_backproject_inverts(self, forward_camera):
        p = np.array([4.0, -0.7, 0.3])
        u, v, depth = project(forward_camera, p)
        assert np.allclose(backproject(forward_camera, u, v, depth), p)

    def test_pixel_rays_unit(self, forward_camera):
        rays = pixel_rays(forward_camera, stride=8)
        assert rays.shape == (8 * 6, 3)
        assert np.allclose(np.linalg.norm(rays, axis=1), 1.0)
        assert np.all(rays[:, 0] > 0)

    def test_ring_rig_sees_around(self):
        rig = ring_rig(6, position=(0.0, 0.0, 1.5))
        for angle in np.linspace(0.0, 2.0 * np.pi, 12, endpoint=False):
            p = [10.0 * np.cos(angle), 10.0 * np.sin(angle), 1.5]
            assert visible_cameras(rig, p)

    def test_bad_models(self):
        ext = look_extrinsics((0, 0, 0), 0.0)
        with pytest.raises(ValueError):
            CameraModel([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], ext, (4, 4))
        bad = ext.copy()
        bad[:3, :3] *= 2.0
        with pytest.raises(ValueError):
            CameraModel(np.eye(3), bad, (4, 4))

    def test_dict(self, forward_camera):
        again = CameraModel.from_dict(forward_camera.to_dict())
        uv, _, _ = project_points(again, [[5.0, 1.0, 0.5]])
        uv0, _, _ = project_points(forward_camera, [[5.0, 1.0, 0.5]])
        assert np.array_equal(uv, uv0)


class TestSampling:
    def test_bilinear(self):
        fmap = np.arange(12, dtype=np.float64).reshape(3, 4, 1)
        out = sample_points(fmap, np.array([1.0, 1.5, 0.5]), np.array([1.0, 1.0, 0.5]))
        assert out[:, 0].tolist() == [5.0, 5.5, 2.5]

    def test_bilinear_sample_per_camera(self):
        maps = FeatureMap2D([np.zeros((3, 4, 1)), np.arange(12, dtype=np.float64).reshape(3, 4, 1)])
        assert bilinear_sample(maps, 1, 1.5, 1.0).tolist() == [5.5]
        assert bilinear_sample(maps, 0, 1.5, 1.0).tolist() == [0.0]

    def test_outside_reads_zero(self):
        fmap = np.ones((3, 4, 2))
        out = sample_points(fmap, np.array([-2.0, 3.5, 10.0]), np.array([0.0, 0.0, 0.0]))
        assert out.tolist() == [[0.0, 0.0], [0.5, 0.5], [0.0, 0.0]]

    def test_feature_map_validation(self):
        with pytest.raises(ShapeError):
            FeatureMap2D([])
        with pytest.raises(ShapeError):
            FeatureMap2D([np.zeros((2, 2, 3)), np.zeros((2, 2, 4))])

    def test_gather_constant(self):
        rig = ring_rig(6, position=(0.0, 0.0, 1.5))
        maps = FeatureMap2D.constant(rig, [2.0, -1.0])
        points = np.array([[6.0, 0.5, 1.4], [0.0, 0.0, 50.0]])
        out = gather_image_features(rig, maps, points)
        assert np.allclose(out[0], [2.0, -1.0])
        assert np.allclose(out[1], 0.0)
