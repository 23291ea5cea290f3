# Seeded stand-in for the LiDAR backbone: a submanifold conv on the
# voxelized cloud followed by a chain of stride-2 downsamplings
import logging
import numpy as np
from typing import Dict, Optional

from voxrefine.generation.probability import module_seed
from voxrefine.lidar.pointcloud import PointCloud, voxelize
from voxrefine.lidar.sparse_conv import SparseConvSpec, downsample, sparse_conv
from voxrefine.voxel.grid import GridGeometry
from voxrefine.voxel.sparse import SparseVoxelGrid

logger = logging.getLogger(__name__)

BACKBONE_SCALES = (1, 2, 4, 8, 16)


class LidarBackbone:
    def __init__(self, geometry: GridGeometry, widths: Dict[int, int],
                 seed: int, mode="conv") -> None:
        # widths maps scale -> channel count; mode "mean" replaces every conv
        # with mean pooling (widths must then all be equal)
        self.geometry = geometry.at_scale(1)
        self.widths = {s: int(widths[s]) for s in BACKBONE_SCALES}
        self.mode = mode
        self.seed = seed
        if mode == "mean" and len(set(self.widths.values())) != 1:
            raise ValueError("mean-pool backbone needs one width at every scale")

        self.stem = SparseConvSpec.seeded(self.widths[1], self.widths[1],
                                          module_seed(seed, "lidar.stem"))
        self.down = {}
        for fine, coarse in zip(BACKBONE_SCALES[:-1], BACKBONE_SCALES[1:]):
            self.down[coarse] = SparseConvSpec.seeded(
                self.widths[fine], self.widths[coarse],
                module_seed(seed, f"lidar.down{coarse}"),
                kernel_extent=2, stride=2)

    def __call__(self, pc: PointCloud, stats: Optional[Dict] = None) -> Dict[int, SparseVoxelGrid]:
        grid = voxelize(pc, self.geometry, self.widths[1], stats=stats)
        return self.forward_grid(grid)

    def forward_grid(self, grid: SparseVoxelGrid) -> Dict[int, SparseVoxelGrid]:
        features = {}
        features[1] = grid if self.mode == "mean" else sparse_conv(grid, self.stem)
        for fine, coarse in zip(BACKBONE_SCALES[:-1], BACKBONE_SCALES[1:]):
            features[coarse] = downsample(features[fine], 2, self.mode,
                                          self.down.get(coarse))
            logger.debug("F_L^%d: %d voxels", coarse, len(features[coarse]))
        return features
