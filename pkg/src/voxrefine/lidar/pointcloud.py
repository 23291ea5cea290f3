# Point clouds and their voxelization into the scale-1 LiDAR grid
import logging
import numpy as np
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from voxrefine.errors import EmptyInput, InvalidScale, ShapeError
from voxrefine.voxel.grid import GridGeometry
from voxrefine.voxel.sparse import SparseVoxelGrid, pack_keys

logger = logging.getLogger(__name__)

# occupancy, intensity, offset xyz
ENCODED_CHANNELS = 5


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 4): x, y, z [m], intensity in [0, 1]
    sensor_origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 4)
        self.sensor_origin = np.asarray(self.sensor_origin, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud contains non-finite values")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]

    @classmethod
    def concatenate(cls, clouds: List["PointCloud"]) -> "PointCloud":
        # Sweeps are assumed to be in a common frame already; keeps the
        # first sweep's sensor origin
        if not clouds:
            raise EmptyInput("no point clouds to concatenate")
        return cls(np.concatenate([c.points for c in clouds], axis=0),
                   clouds[0].sensor_origin)


def voxelize(pc: PointCloud, geom: GridGeometry, channels: int = 16,
             stats: Optional[Dict] = None) -> SparseVoxelGrid:
    # Hand-crafted per-voxel encoding standing in for a learned front end:
    # [count / max count, mean intensity, mean offset from centre (in voxel
    # units), zero padding up to `channels`]
    if geom.scale != 1:
        raise InvalidScale(f"voxelize expects a scale-1 geometry, got scale {geom.scale}")
    if len(pc) == 0:
        raise EmptyInput("cannot voxelize an empty point cloud")
    if channels < ENCODED_CHANNELS:
        raise ShapeError(f"need at least {ENCODED_CHANNELS} channels, got {channels}")

    idx = geom.world_to_index(pc.xyz)
    inside = geom.contains(idx)
    discarded = int(np.count_nonzero(~inside))
    if discarded:
        logger.debug("discarded %d of %d points outside the grid", discarded, len(pc))
    if stats is not None:
        stats.update(points=len(pc), discarded=discarded)

    pts = pc.points[inside]
    idx = idx[inside]
    if len(pts) == 0:
        logger.warning("all %d points fell outside the grid", len(pc))
        if stats is not None:
            stats["voxels"] = 0
        return SparseVoxelGrid.empty(geom, channels)

    # Fixed summation order so the result is independent of input order
    keys = pack_keys(idx)
    order = np.lexsort((pts[:, 3], pts[:, 2], pts[:, 1], pts[:, 0], keys))
    pts, idx, keys = pts[order], idx[order], keys[order]

    uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    coords = idx[first]
    count = np.bincount(inverse).astype(np.float64)
    offsets = (pts[:, :3] - geom.centers(idx)) / geom.size

    features = np.zeros((len(uniq), channels))
    features[:, 0] = count / count.max()
    features[:, 1] = np.bincount(inverse, weights=pts[:, 3]) / count
    for axis in range(3):
        features[:, 2 + axis] = np.bincount(inverse, weights=offsets[:, axis]) / count

    if stats is not None:
        stats["voxels"] = len(uniq)
    return SparseVoxelGrid(geom, coords, features)
