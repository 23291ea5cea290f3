# LiDAR densification: scale-aligned concatenation of the scale 4/8/16
# non-empty voxels and averaging of overlapping features at scale 4
import logging
import numpy as np
from typing import Dict, List

from voxrefine.errors import EmptyInput, ShapeError
from voxrefine.generation.probability import module_rng, seeded_linear
from voxrefine.voxel.grid import align_coords, child_offsets
from voxrefine.voxel.sparse import SparseVoxelGrid, pack_keys, unpack_keys

logger = logging.getLogger(__name__)

DENSIFY_SCALES = (4, 8, 16)


class MultiScaleFeatures:
    def __init__(self, grids: Dict[int, SparseVoxelGrid]) -> None:
        missing = [s for s in DENSIFY_SCALES if s not in grids]
        if missing:
            raise ShapeError(f"multi-scale features missing scales {missing}")
        base = grids[4].geometry
        for s in DENSIFY_SCALES:
            g = grids[s].geometry
            if g.scale != s:
                raise ShapeError(f"grid stored under scale {s} has scale {g.scale}")
            if g.origin != base.origin or g.dims_scale1 != base.dims_scale1 \
                    or g.voxel_size != base.voxel_size:
                raise ShapeError("all scales must share origin, voxel size and dims")
        self.grids = {s: grids[s] for s in DENSIFY_SCALES}
        self.projected: List[int] = []  # scales whose widths were projected

    @property
    def geometry(self):
        return self.grids[4].geometry

    @property
    def channels(self) -> int:
        return self.grids[4].channels

    def total_voxels(self) -> int:
        return sum(len(g) for g in self.grids.values())

    def equalize_widths(self, seed: int) -> Dict[int, np.ndarray]:
        # Features per scale at the scale-4 width; mismatched scales go
        # through a seeded linear map
        target = self.channels
        out = {}
        for s in DENSIFY_SCALES:
            feats = self.grids[s].features
            if feats.shape[1] != target:
                w, _ = seeded_linear(module_rng(seed, f"densify.proj{s}"),
                                     feats.shape[1], target, bias=False)
                logger.warning("scale %d has %d channels, projecting to %d",
                               s, feats.shape[1], target)
                feats = feats @ w
                if s not in self.projected:
                    self.projected.append(s)
            out[s] = feats
        return out


def aligned_contributions(ms: MultiScaleFeatures, broadcast=False, seed=0):
    # The concatenated multiset: (coords at scale 4, features), scale 4 first
    feats = ms.equalize_widths(seed)
    geom4 = ms.geometry
    all_coords, all_feats = [], []
    for s in DENSIFY_SCALES:
        grid = ms.grids[s]
        if len(grid) == 0:
            continue
        anchors = align_coords(grid.coords, s, 4)
        f = feats[s]
        if broadcast and s > 4:
            # Every scale-4 cell under the coarse voxel's footprint
            offs = child_offsets(s // 4)
            anchors = (anchors[:, None, :] + offs[None, :, :]).reshape(-1, 3)
            f = np.repeat(f, len(offs), axis=0)
            keep = geom4.contains(anchors)
            anchors, f = anchors[keep], f[keep]
        all_coords.append(anchors)
        all_feats.append(f)
    return all_coords, all_feats


def densify(ms: MultiScaleFeatures, broadcast=False, seed=0) -> SparseVoxelGrid:
    if ms.total_voxels() == 0:
        raise EmptyInput("no non-empty voxels at any scale")
    coords, feats = aligned_contributions(ms, broadcast, seed)
    coords = np.concatenate(coords, axis=0)
    feats = np.concatenate(feats, axis=0)

    keys, inverse = np.unique(pack_keys(coords), return_inverse=True)
    sums = np.zeros((len(keys), feats.shape[1]))
    np.add.at(sums, inverse, feats)
    counts = np.bincount(inverse, minlength=len(keys)).astype(np.float64)
    dense = SparseVoxelGrid(ms.geometry, unpack_keys(keys), sums / counts[:, None])
    logger.debug("densified %s -> %d voxels",
                 {s: len(g) for s, g in ms.grids.items()}, len(dense))
    return dense
