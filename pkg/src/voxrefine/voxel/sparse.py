# Sparse voxel storage: sorted integer coordinates with a fixed-width
# feature row per coordinate
import numpy as np
from typing import Dict, Iterable, Optional, Tuple, Union

from voxrefine.errors import DuplicateVoxel, OutOfBounds, ShapeError
from voxrefine.voxel.grid import GridGeometry, VoxelIndex

KEY_BITS = 21  # per axis; 2^21 cells covers every preset at scale 1
_KEY_MASK = (1 << KEY_BITS) - 1


def pack_keys(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    return (coords[:, 0] << (2 * KEY_BITS)) | (coords[:, 1] << KEY_BITS) | coords[:, 2]


def unpack_keys(keys: np.ndarray) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    return np.stack([(keys >> (2 * KEY_BITS)) & _KEY_MASK,
                     (keys >> KEY_BITS) & _KEY_MASK,
                     keys & _KEY_MASK], axis=1)


class SparseVoxelGrid:
    def __init__(self, geometry: GridGeometry, coords: np.ndarray,
                 features: np.ndarray) -> None:
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != coords.shape[0]:
            raise ShapeError(f"features {features.shape} do not match "
                             f"{coords.shape[0]} coordinates")
        inside = geometry.contains(coords)
        if not np.all(inside):
            bad = coords[~inside][0]
            raise OutOfBounds(f"voxel {tuple(bad)} outside dims {geometry.dims}")

        keys = pack_keys(coords)
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        if len(keys) > 1 and np.any(keys[1:] == keys[:-1]):
            dup = unpack_keys(keys[1:][keys[1:] == keys[:-1]][:1])[0]
            raise DuplicateVoxel(f"voxel {tuple(dup)} inserted twice")

        self.geometry = geometry
        self.keys = keys
        self.coords = coords[order]
        self.features = features[order]
        for arr in (self.keys, self.coords, self.features):
            arr.setflags(write=False)
        self._index: Optional[Dict[int, int]] = None

    @classmethod
    def empty(cls, geometry: GridGeometry, channels: int) -> "SparseVoxelGrid":
        return cls(geometry, np.zeros((0, 3), dtype=np.int64),
                   np.zeros((0, channels)))

    @classmethod
    def from_dense(cls, geometry: GridGeometry, dense: np.ndarray,
                   mask: Optional[np.ndarray] = None) -> "SparseVoxelGrid":
        # dense is (X, Y, Z, C); mask picks the stored cells (default: any nonzero)
        if mask is None:
            mask = np.any(dense != 0, axis=-1)
        coords = np.argwhere(mask)
        return cls(geometry, coords, dense[mask])

    @property
    def scale(self) -> int:
        return self.geometry.scale

    @property
    def channels(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.coords.shape[0]

    def __repr__(self) -> str:
        return f"SparseVoxelGrid(scale={self.scale}, n={len(self)}, C={self.channels})"

    def lookup_rows(self, coords: np.ndarray) -> np.ndarray:
        # Row per query coordinate, -1 where absent (or outside the grid)
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        rows = np.full(len(coords), -1, dtype=np.int64)
        if len(self) == 0 or len(coords) == 0:
            return rows
        inside = self.geometry.contains(coords)
        q = pack_keys(np.where(inside[:, None], coords, 0))
        pos = np.searchsorted(self.keys, q)
        pos = np.clip(pos, 0, len(self.keys) - 1)
        hit = inside & (self.keys[pos] == q)
        rows[hit] = pos[hit]
        return rows

    def lookup(self, idx: Union[VoxelIndex, Tuple[int, int, int]]) -> Optional[int]:
        if self._index is None:
            self._index = {int(k): i for i, k in enumerate(self.keys)}
        xyz = idx.xyz() if isinstance(idx, VoxelIndex) else tuple(idx)
        if isinstance(idx, VoxelIndex) and idx.scale != self.scale:
            return None
        if not self.geometry.contains(np.asarray(xyz)):
            return None
        return self._index.get(int(pack_keys(np.asarray(xyz))[0]))

    def feature(self, idx) -> Optional[np.ndarray]:
        row = self.lookup(idx)
        return None if row is None else self.features[row]

    def gather(self, coords: np.ndarray) -> np.ndarray:
        # Features at coords, zero rows where absent
        rows = self.lookup_rows(coords)
        out = np.zeros((len(rows), self.channels))
        hit = rows >= 0
        out[hit] = self.features[rows[hit]]
        return out

    def indices(self) -> Iterable[VoxelIndex]:
        for c in self.coords:
            yield VoxelIndex(int(c[0]), int(c[1]), int(c[2]), self.scale)

    def with_features(self, features: np.ndarray) -> "SparseVoxelGrid":
        # Same (already sorted) coordinate set, new features
        return SparseVoxelGrid(self.geometry, self.coords, features)

    def to_dense(self, fill: float = 0.0) -> np.ndarray:
        dense = np.full(tuple(self.geometry.dims) + (self.channels,), fill)
        if len(self):
            dense[self.coords[:, 0], self.coords[:, 1], self.coords[:, 2]] = self.features
        return dense

    def occupancy_mask(self) -> np.ndarray:
        mask = np.zeros(self.geometry.dims, dtype=bool)
        if len(self):
            mask[self.coords[:, 0], self.coords[:, 1], self.coords[:, 2]] = True
        return mask

    def equals(self, other: "SparseVoxelGrid") -> bool:
        # Bit-exact comparison
        return (self.geometry == other.geometry
                and np.array_equal(self.coords, other.coords)
                and np.array_equal(self.features, other.features))
