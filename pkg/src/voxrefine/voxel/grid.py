# Regular 3D voxel grids at power-of-two scales, and the integer index
# algebra that moves voxels between scales
import numpy as np
from dataclasses import dataclass, replace
from typing import Dict, List, NamedTuple, Sequence, Tuple

from voxrefine.errors import InvalidFactor, InvalidScale, OutOfBounds

SCALES = (1, 2, 4, 8, 16)


class VoxelIndex(NamedTuple):
    x: int
    y: int
    z: int
    scale: int = 1

    def xyz(self) -> Tuple[int, int, int]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class GridGeometry:
    origin: Tuple[float, float, float]
    voxel_size: float  # meters at scale 1
    dims_scale1: Tuple[int, int, int]
    scale: int = 1

    def __post_init__(self) -> None:
        if self.scale not in SCALES:
            raise InvalidScale(f"scale {self.scale} not in {SCALES}")
        if len(self.dims_scale1) != 3 or min(self.dims_scale1) <= 0:
            raise InvalidScale(f"dims must be a positive triple, got {self.dims_scale1}")
        if self.voxel_size <= 0:
            raise InvalidScale(f"voxel size must be positive, got {self.voxel_size}")

    @property
    def dims(self) -> Tuple[int, int, int]:
        # ceil(dims_scale1 / scale), component-wise
        return tuple(-(-d // self.scale) for d in self.dims_scale1)

    @property
    def size(self) -> float:
        return self.voxel_size * self.scale

    @property
    def num_voxels(self) -> int:
        return int(np.prod(self.dims))

    def at_scale(self, scale: int) -> "GridGeometry":
        return replace(self, scale=scale)

    def extent(self) -> np.ndarray:
        # World-space size of the grid (uses scale-1 dims)
        return np.asarray(self.dims_scale1, dtype=np.float64) * self.voxel_size

    def contains(self, coords: np.ndarray) -> np.ndarray:
        # Boolean mask of integer coords (N, 3) inside the grid at this scale
        coords = np.asarray(coords)
        dims = np.asarray(self.dims)
        return np.all((coords >= 0) & (coords < dims), axis=-1)

    def world_to_index(self, points: np.ndarray) -> np.ndarray:
        # Floor rule: a point on a face belongs to the cell above it
        points = np.asarray(points, dtype=np.float64)
        rel = (points[..., :3] - np.asarray(self.origin)) / self.size
        return np.floor(rel).astype(np.int64)

    def centers(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.float64)
        return np.asarray(self.origin) + (coords + 0.5) * self.size

    def to_dict(self) -> Dict:
        return {"origin": list(self.origin), "voxel_size": self.voxel_size,
                "dims_scale1": list(self.dims_scale1), "scale": self.scale}

    @classmethod
    def from_preset(cls, name: str, scale=1) -> "GridGeometry":
        if name not in PRESETS:
            raise KeyError(f"unknown geometry preset '{name}'")
        return replace(PRESETS[name], scale=scale)


PRESETS = {
    # [-51.2, 51.2] x [-51.2, 51.2] x [-5, 3] m
    "nuscenes-occ": GridGeometry((-51.2, -51.2, -5.0), 0.2, (512, 512, 40)),
    # [0, 51.2] x [-25.6, 25.6] x [-2, 4.4] m
    "semantickitti": GridGeometry((0.0, -25.6, -2.0), 0.2, (256, 256, 32)),
}


def _scale_ratio(from_scale: int, to_scale: int) -> Tuple[int, bool]:
    # Returns (factor, refine) where refine means coarse -> fine
    if from_scale <= 0 or to_scale <= 0:
        raise InvalidScale(f"scales must be positive: {from_scale}, {to_scale}")
    if from_scale % to_scale == 0:
        return from_scale // to_scale, True
    if to_scale % from_scale == 0:
        return to_scale // from_scale, False
    raise InvalidScale(f"scales {from_scale} and {to_scale} are not related by an integer factor")


def align_scale(idx: VoxelIndex, target_scale: int) -> VoxelIndex:
    factor, refine = _scale_ratio(idx.scale, target_scale)
    if refine:
        return VoxelIndex(idx.x * factor, idx.y * factor, idx.z * factor, target_scale)
    # Coarsening drops the sub-voxel phase
    return VoxelIndex(idx.x // factor, idx.y // factor, idx.z // factor, target_scale)


def align_coords(coords: np.ndarray, from_scale: int, to_scale: int) -> np.ndarray:
    # Vectorised align_scale over an (N, 3) integer array
    factor, refine = _scale_ratio(from_scale, to_scale)
    coords = np.asarray(coords, dtype=np.int64)
    return coords * factor if refine else coords // factor


def child_offsets(factor: int) -> np.ndarray:
    # factor^3 offsets in lexicographic order, z fastest
    if factor not in (2, 4):
        raise InvalidFactor(f"subdivision factor must be 2 or 4, got {factor}")
    r = np.arange(factor)
    gx, gy, gz = np.meshgrid(r, r, r, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)


def subdivide(idx: VoxelIndex, factor: int) -> List[VoxelIndex]:
    offsets = child_offsets(factor)
    if idx.scale % factor != 0:
        raise InvalidScale(f"scale {idx.scale} is not divisible by {factor}")
    base = np.asarray(idx.xyz()) * factor
    child_scale = idx.scale // factor
    return [VoxelIndex(int(c[0]), int(c[1]), int(c[2]), child_scale)
            for c in base + offsets]


def subdivide_coords(coords: np.ndarray, factor: int) -> np.ndarray:
    # (N, 3) parents -> (N * factor^3, 3) children, grouped per parent
    offsets = child_offsets(factor)
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    children = coords[:, None, :] * factor + offsets[None, :, :]
    return children.reshape(-1, 3)


def voxel_center(idx: VoxelIndex, geom: GridGeometry) -> np.ndarray:
    geom = geom.at_scale(idx.scale)
    if not geom.contains(np.asarray(idx.xyz())):
        raise OutOfBounds(f"{idx} outside dims {geom.dims}")
    return geom.centers(np.asarray(idx.xyz()))


def in_bounds(idx: VoxelIndex, geom: GridGeometry) -> bool:
    return bool(geom.at_scale(idx.scale).contains(np.asarray(idx.xyz())))


def sort_coords(coords: Sequence) -> np.ndarray:
    # Lexicographic (x, y, z) order
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    if len(coords) == 0:
        return coords
    order = np.lexsort((coords[:, 2], coords[:, 1], coords[:, 0]))
    return coords[order]
