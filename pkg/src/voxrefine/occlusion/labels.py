# Occlusion-aware ground truth: per-modality ray casting from the LiDAR and
# the cameras, and the rule that combines the two modalities
import logging
import numpy as np
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, List, Optional

from voxrefine.fusion.camera import CameraModel, pixel_rays
from voxrefine.lidar.pointcloud import PointCloud
from voxrefine.occlusion.raycast import grid_diagonal, walk
from voxrefine.voxel.grid import GridGeometry

logger = logging.getLogger(__name__)

EMPTY_CLASS = 0
IGNORE_LABEL = 255


class OcclusionLabel(IntEnum):
    EMPTY = 0
    NON_OCCLUDED = 1
    OCCLUDED = 2


# Merge priority within one modality: NonOccluded > Occluded > Empty
_RANK_OF_LABEL = np.array([0, 2, 1], dtype=np.uint8)
_LABEL_OF_RANK = np.array([OcclusionLabel.EMPTY, OcclusionLabel.OCCLUDED,
                           OcclusionLabel.NON_OCCLUDED], dtype=np.uint8)


def merge_labels(a, b):
    # Commutative, associative max on the priority order
    ra = _RANK_OF_LABEL[np.asarray(a, dtype=np.uint8)]
    rb = _RANK_OF_LABEL[np.asarray(b, dtype=np.uint8)]
    return _LABEL_OF_RANK[np.maximum(ra, rb)]


def combine(lidar: OcclusionLabel, cam: OcclusionLabel) -> OcclusionLabel:
    if lidar == OcclusionLabel.NON_OCCLUDED or cam == OcclusionLabel.NON_OCCLUDED:
        return OcclusionLabel.NON_OCCLUDED
    if lidar == OcclusionLabel.OCCLUDED and cam == OcclusionLabel.OCCLUDED:
        return OcclusionLabel.OCCLUDED
    return OcclusionLabel.EMPTY


def combine_volumes(lidar: np.ndarray, cam: np.ndarray) -> np.ndarray:
    lidar, cam = np.asarray(lidar), np.asarray(cam)
    non_occ = (lidar == OcclusionLabel.NON_OCCLUDED) | (cam == OcclusionLabel.NON_OCCLUDED)
    occ = (lidar == OcclusionLabel.OCCLUDED) & (cam == OcclusionLabel.OCCLUDED)
    out = np.full(lidar.shape, OcclusionLabel.EMPTY, dtype=np.uint8)
    out[occ] = OcclusionLabel.OCCLUDED
    out[non_occ] = OcclusionLabel.NON_OCCLUDED
    return out


def non_empty_mask(gt: np.ndarray, empty_class=EMPTY_CLASS, ignore_label=IGNORE_LABEL) -> np.ndarray:
    gt = np.asarray(gt)
    return (gt != empty_class) & (gt != ignore_label)


class _RankVolume:
    # Per-voxel priority rank, merged by max
    def __init__(self, dims) -> None:
        self.rank = np.zeros(dims, dtype=np.uint8)

    def mark(self, cell, label: OcclusionLabel) -> None:
        r = _RANK_OF_LABEL[label]
        if r > self.rank[cell]:
            self.rank[cell] = r

    def labels(self, occupied: np.ndarray) -> np.ndarray:
        out = _LABEL_OF_RANK[self.rank]
        # GT-empty voxels are never NonOccluded / Occluded
        out[~occupied] = OcclusionLabel.EMPTY
        return out


def label_lidar(pc: PointCloud, gt: np.ndarray, geom: GridGeometry,
                margin: Optional[float] = None, empty_class=EMPTY_CLASS,
                provenance: Optional[Dict] = None) -> np.ndarray:
    # Point voxels are NonOccluded; GT-occupied voxels behind a point along
    # its ray are Occluded; free space in front of a hit stays Empty. Points
    # outside the grid cast no ray.
    # `provenance`, when given, maps each Occluded cell to the
    # (point index, hit cell) that marked it.
    occupied = non_empty_mask(gt, empty_class)
    if occupied.shape != tuple(geom.dims):
        raise ValueError(f"GT volume {occupied.shape} does not match dims {geom.dims}")
    margin = grid_diagonal(geom) if margin is None else margin
    ranks = _RankVolume(geom.dims)
    idx = geom.world_to_index(pc.xyz)
    inside = np.flatnonzero(geom.contains(idx))
    if len(inside) < len(pc):
        logger.debug("%d of %d points outside the grid", len(pc) - len(inside), len(pc))

    origin = pc.sensor_origin
    for i in inside:
        ranks.mark(tuple(idx[i]), OcclusionLabel.NON_OCCLUDED)
    for i in inside:
        hit_cell = tuple(idx[i])
        for cell, t in walk(origin, pc.xyz[i], geom, margin):
            if t < 1.0 or cell == hit_cell or not occupied[cell]:
                continue
            ranks.mark(cell, OcclusionLabel.OCCLUDED)
            if provenance is not None:
                provenance.setdefault(cell, (int(i), hit_cell))
    return ranks.labels(occupied)


def label_camera(rig: List[CameraModel], gt: np.ndarray, geom: GridGeometry,
                 stride=4, empty_class=EMPTY_CLASS,
                 provenance: Optional[Dict] = None) -> np.ndarray:
    # One ray per `stride`-th pixel: the first GT-occupied voxel is
    # NonOccluded, every GT-occupied voxel after it Occluded
    if not rig:
        raise ValueError("camera labelling needs at least one camera")
    occupied = non_empty_mask(gt, empty_class)
    if occupied.shape != tuple(geom.dims):
        raise ValueError(f"GT volume {occupied.shape} does not match dims {geom.dims}")
    ranks = _RankVolume(geom.dims)
    grid_center = np.asarray(geom.origin) + geom.extent() / 2.0
    for cam_id, cam in enumerate(rig):
        origin = cam.center
        reach = np.linalg.norm(origin - grid_center) + grid_diagonal(geom)
        for ray_id, direction in enumerate(pixel_rays(cam, stride)):
            first = None
            for cell, _ in walk(origin, origin + direction * reach, geom):
                if not occupied[cell]:
                    continue
                if first is None:
                    first = cell
                    ranks.mark(cell, OcclusionLabel.NON_OCCLUDED)
                else:
                    ranks.mark(cell, OcclusionLabel.OCCLUDED)
                    if provenance is not None:
                        provenance.setdefault(cell, ((cam_id, ray_id), first))
        logger.debug("camera %d labelled", cam_id)
    return ranks.labels(occupied)


@dataclass
class OcclusionVolume:
    geometry: GridGeometry
    semantic: np.ndarray  # (X, Y, Z) uint16 class ids
    occlusion: np.ndarray  # (X, Y, Z) uint8 OcclusionLabel

    def __post_init__(self) -> None:
        self.semantic = np.asarray(self.semantic, dtype=np.uint16)
        self.occlusion = np.asarray(self.occlusion, dtype=np.uint8)
        if self.semantic.shape != tuple(self.geometry.dims) \
                or self.occlusion.shape != self.semantic.shape:
            raise ValueError("semantic / occlusion arrays do not match the geometry")

    def histogram(self) -> Dict[str, int]:
        counts = np.bincount(self.occlusion.ravel(), minlength=3)
        return {label.name.lower(): int(counts[label]) for label in OcclusionLabel}


def build_occlusion_volume(pc: PointCloud, rig: List[CameraModel], gt: np.ndarray,
                           geom: GridGeometry, stride=4, margin: Optional[float] = None,
                           empty_class=EMPTY_CLASS) -> OcclusionVolume:
    lidar = label_lidar(pc, gt, geom, margin, empty_class)
    if rig:
        cam = label_camera(rig, gt, geom, stride, empty_class)
    else:
        logger.warning("no cameras: camera modality is all Empty")
        cam = np.zeros(geom.dims, dtype=np.uint8)
    return OcclusionVolume(geom, gt, combine_volumes(lidar, cam))


def coarsen_semantic(sem: np.ndarray, factor=4, empty_class=EMPTY_CLASS,
                     ignore_label=IGNORE_LABEL) -> np.ndarray:
    # Majority non-empty class among the children; empty when none are
    # occupied, ignore when every child is ignored
    blocks = _blocks(np.asarray(sem), factor, fill=empty_class)
    occupied = (blocks != empty_class) & (blocks != ignore_label)
    classes = np.unique(blocks[occupied])
    out = np.full(blocks.shape[:3], empty_class, dtype=np.asarray(sem).dtype)
    best = np.zeros(blocks.shape[:3], dtype=np.int64)
    for c in classes:
        n = np.count_nonzero(blocks == c, axis=-1)
        better = n > best
        out[better] = c
        best[better] = n[better]
    out[np.all(blocks == ignore_label, axis=-1)] = ignore_label
    return out


def coarsen_occlusion(occ: np.ndarray, factor=4) -> np.ndarray:
    blocks = _blocks(np.asarray(occ, dtype=np.uint8), factor, fill=OcclusionLabel.EMPTY)
    return _LABEL_OF_RANK[_RANK_OF_LABEL[blocks].max(axis=-1)]


def _blocks(vol: np.ndarray, factor: int, fill) -> np.ndarray:
    # (X, Y, Z) -> (X/f, Y/f, Z/f, f^3), padding up to a multiple of f
    X, Y, Z = vol.shape
    shape = tuple(-(-n // factor) * factor for n in (X, Y, Z))
    pad = np.full(shape, fill, dtype=vol.dtype)
    pad[:X, :Y, :Z] = vol
    f = factor
    b = pad.reshape(shape[0] // f, f, shape[1] // f, f, shape[2] // f, f)
    return b.transpose(0, 2, 4, 1, 3, 5).reshape(shape[0] // f, shape[1] // f,
                                                 shape[2] // f, f ** 3)
