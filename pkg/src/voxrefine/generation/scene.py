# Synthetic scenes: ground plus boxes, with a simulated LiDAR sweep and
# class-feature camera renders that are all derived from the same geometry
import logging
import numpy as np
from dataclasses import dataclass, field
from typing import Dict, List

from voxrefine.fusion.camera import CameraModel, FeatureMap2D, pixel_rays, ring_rig
from voxrefine.generation.classes import load_class_table
from voxrefine.generation.probability import module_rng
from voxrefine.generation.region import Box, rasterize
from voxrefine.lidar.pointcloud import PointCloud
from voxrefine.occlusion.raycast import grid_diagonal, iter_walk
from voxrefine.voxel.grid import GridGeometry

logger = logging.getLogger(__name__)

SCENE_GEOMETRY = GridGeometry((-6.4, -6.4, -0.4), 0.2, (64, 64, 16))
SENSOR_ORIGIN = (0.1, 0.1, 1.7)
SURFACE_NUDGE = 1e-4  # meters past the first surface a simulated return lands

_CLASSES = load_class_table("nuscenes-occ")
GROUND = _CLASSES.id_of("driveable_surface")
WALL = _CLASSES.id_of("manmade")
OBJECT_CLASSES = [_CLASSES.id_of(n) for n in ("car", "truck", "manmade", "vegetation")]


def _first_hit(origin: np.ndarray, direction: np.ndarray, reach: float,
               gt: np.ndarray, geom: GridGeometry):
    # (cell, distance) of the first occupied cell along a ray, or None
    for cell, t in iter_walk(origin, origin + direction * reach, geom):
        if gt[cell] != 0:
            return cell, t * reach
    return None


@dataclass
class SyntheticScene:
    name: str
    geometry: GridGeometry
    boxes: List[Box]
    sensor_origin: np.ndarray = field(default_factory=lambda: np.array(SENSOR_ORIGIN))
    seed: int = 0

    def __post_init__(self) -> None:
        self.sensor_origin = np.asarray(self.sensor_origin, dtype=np.float64)
        self.gt = rasterize(self.boxes, self.geometry)

    @property
    def n_classes(self) -> int:
        return len(_CLASSES)

    def lidar_scan(self, n_azimuth=180, n_elevation=16,
                   elevation_deg=(-25.0, 5.0)) -> PointCloud:
        # One return per beam at the first occupied cell, nudged just past the
        # surface so the floor rule puts it inside that cell
        reach = grid_diagonal(self.geometry)
        az = np.linspace(0.0, 2.0 * np.pi, n_azimuth, endpoint=False)
        el = np.radians(np.linspace(elevation_deg[0], elevation_deg[1], n_elevation))
        points = []
        for e in el:
            for a in az:
                d = np.array([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)])
                hit = _first_hit(self.sensor_origin, d, reach, self.gt, self.geometry)
                if hit is None:
                    continue
                cell, dist = hit
                p = self.sensor_origin + d * (dist + SURFACE_NUDGE)
                points.append([p[0], p[1], p[2], self.gt[cell] / (self.n_classes - 1)])
        logger.debug("%s: %d LiDAR returns", self.name, len(points))
        return PointCloud(np.asarray(points, dtype=np.float64).reshape(-1, 4), self.sensor_origin)

    def rig(self, n_cameras=6, image_size=(48, 32), pitch=0.2) -> List[CameraModel]:
        position = self.sensor_origin - np.array([0.0, 0.0, 0.2])
        return ring_rig(n_cameras, 70.0, image_size, tuple(position), pitch)

    def palette(self, channels: int) -> np.ndarray:
        # (n_classes, channels) class embeddings; empty renders as zeros
        p = module_rng(self.seed, "scene.palette").normal(0.0, 1.0, size=(self.n_classes, channels))
        p[0] = 0.0
        return p

    def render(self, rig: List[CameraModel], channels: int) -> FeatureMap2D:
        # Per pixel, the embedding of the first occupied cell along its ray
        palette = self.palette(channels)
        grid_center = np.asarray(self.geometry.origin) + self.geometry.extent() / 2.0
        maps = []
        for cam in rig:
            W, H = cam.image_size
            reach = np.linalg.norm(cam.center - grid_center) + grid_diagonal(self.geometry)
            classes = np.zeros(W * H, dtype=np.int64)
            for i, d in enumerate(pixel_rays(cam)):
                hit = _first_hit(cam.center, d, reach, self.gt, self.geometry)
                if hit is not None:
                    classes[i] = self.gt[hit[0]]
            maps.append(palette[classes].reshape(H, W, channels))
        return FeatureMap2D(maps)

    def to_dict(self) -> Dict:
        return {"name": self.name, "geometry": self.geometry.to_dict(),
                "sensor_origin": self.sensor_origin.tolist(), "seed": self.seed,
                "boxes": [b.to_dict() for b in self.boxes]}


def _ground(geom: GridGeometry) -> Box:
    # Two cells thick, across the whole grid
    return Box.from_cells("ground", GROUND, geom, (0, 0, 0), (geom.dims[0], geom.dims[1], 2))


def empty_scene(geom: GridGeometry = SCENE_GEOMETRY) -> SyntheticScene:
    return SyntheticScene("empty", geom, [])


def wall_scene(geom: GridGeometry = SCENE_GEOMETRY) -> SyntheticScene:
    # Ground plus a 2-cell-thick wall across +x, 5 m from the sensor
    wall = Box.from_cells("wall", WALL, geom, (57, 8, 2), (2, 48, 10))
    return SyntheticScene("wall", geom, [_ground(geom), wall])


def random_scene(seed: int, n_boxes=4, geom: GridGeometry = SCENE_GEOMETRY) -> SyntheticScene:
    # Ground plus cell-aligned boxes of at least 8 cells per axis, kept clear
    # of the sensor column
    rng = module_rng(seed, "scene.boxes")
    sensor_cell = geom.world_to_index(np.array(SENSOR_ORIGIN))
    boxes = [_ground(geom)]
    X, Y, Z = geom.dims
    while len(boxes) < n_boxes + 1:
        size = (int(rng.integers(8, 17)), int(rng.integers(8, 17)), int(rng.integers(8, Z - 1)))
        lo = (int(rng.integers(0, X - size[0] + 1)), int(rng.integers(0, Y - size[1] + 1)), 2)
        clear = [lo[a] - 4 > sensor_cell[a] or lo[a] + size[a] + 4 <= sensor_cell[a]
                 for a in (0, 1)]
        if not any(clear):
            continue
        class_id = OBJECT_CLASSES[int(rng.integers(len(OBJECT_CLASSES)))]
        boxes.append(Box.from_cells(f"box{len(boxes)}", class_id, geom, lo, size))
    return SyntheticScene(f"random-{seed}", geom, boxes, seed=seed)


def scene_by_name(name: str) -> SyntheticScene:
    # "empty", "wall", "street" or "random:<seed>"
    if name == "empty":
        return empty_scene()
    if name == "wall":
        return wall_scene()
    if name == "street":
        return random_scene(7)
    if name.startswith("random:"):
        return random_scene(int(name.split(":", 1)[1]))
    raise KeyError(f"unknown synthetic scene '{name}'")


def bench_scene(k: int) -> SyntheticScene:
    # The same few objects on a fixed ground patch inside a grid whose dims
    # grow k-fold per axis, so the non-empty count stays put
    base = SCENE_GEOMETRY
    geom = GridGeometry(base.origin, base.voxel_size, tuple(d * k for d in base.dims_scale1))
    X, Y, _ = base.dims
    boxes = [
        Box.from_cells("ground", GROUND, geom, (0, 0, 0), (X, Y, 2)),
        Box.from_cells("wall", WALL, geom, (57, 8, 2), (2, 48, 10)),
        Box.from_cells("car", OBJECT_CLASSES[0], geom, (10, 40, 2), (10, 8, 8)),
    ]
    return SyntheticScene(f"bench-{k}", geom, boxes)
