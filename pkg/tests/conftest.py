# Shared fixtures: small grids, a seeded point cloud and the synthetic
# wall scene (built once per session, its rays are slow in pure Python)
import numpy as np
import pytest

from voxrefine.config import PipelineConfig
from voxrefine.generation.scene import wall_scene
from voxrefine.lidar.pointcloud import PointCloud
from voxrefine.voxel.grid import GridGeometry


@pytest.fixture
def unit_geom():
    # 8^3 cells of 1 m, origin at 0
    return GridGeometry((0.0, 0.0, 0.0), 1.0, (8, 8, 8))


@pytest.fixture
def small_geom():
    # 4 m cube at 0.25 m: 16^3 at scale 1, 4^3 at scale 4
    return GridGeometry((0.0, 0.0, 0.0), 0.25, (16, 16, 16))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_cloud(small_geom, rng):
    xyz = rng.uniform(0.05, 3.95, size=(300, 3))
    intensity = rng.uniform(0.0, 1.0, size=(300, 1))
    return PointCloud(np.hstack([xyz, intensity]), np.array([2.0, 2.0, 2.0]))


@pytest.fixture
def config():
    return PipelineConfig.load()


@pytest.fixture(scope="session")
def wall():
    return wall_scene()


@pytest.fixture(scope="session")
def wall_inputs(wall):
    # (pc, rig, maps) at a reduced camera resolution
    rig = wall.rig(image_size=(24, 16))
    return wall.lidar_scan(), rig, wall.render(rig, 16)
