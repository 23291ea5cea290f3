# Axis-aligned box primitives that make up a synthetic scene
import numpy as np
from typing import List, Sequence

from voxrefine.voxel.grid import GridGeometry


class Box:
    def __init__(self, name: str, class_id: int, lo: Sequence[float],
                 hi: Sequence[float]) -> None:
        self.name = name
        self.class_id = int(class_id)
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        if self.lo.shape != (3,) or self.hi.shape != (3,) or np.any(self.hi <= self.lo):
            raise ValueError(f"box '{name}' needs lo < hi on every axis")

    @classmethod
    def from_box(cls, box, name="", class_id=None, lo=None, hi=None):
        # Copy properties from 'box', overwrite with kwargs
        if not name:
            name = box.name
        if class_id is None:
            class_id = box.class_id
        if lo is None:
            lo = box.lo
        if hi is None:
            hi = box.hi

        return cls(name, class_id, lo, hi)

    @classmethod
    def from_cells(cls, name: str, class_id: int, geom: GridGeometry,
                   lo_cell: Sequence[int], size_cells: Sequence[int]):
        # Box covering exactly the scale-1 cells lo_cell .. lo_cell + size - 1
        lo = np.asarray(geom.origin) + np.asarray(lo_cell) * geom.voxel_size
        hi = lo + np.asarray(size_cells) * geom.voxel_size
        return cls(name, class_id, lo, hi)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return np.all((points >= self.lo) & (points < self.hi), axis=-1)

    def to_dict(self):
        return {"name": self.name, "class_id": self.class_id,
                "lo": self.lo.tolist(), "hi": self.hi.tolist()}

    def __str__(self) -> str:
        return self.name


def rasterize(boxes: List[Box], geom: GridGeometry, empty_class=0) -> np.ndarray:
    # Dense class volume at geom's scale: a voxel takes the class of the last
    # box containing its centre
    vol = np.full(geom.dims, empty_class, dtype=np.uint16)
    axes = [geom.origin[a] + (np.arange(geom.dims[a]) + 0.5) * geom.size for a in range(3)]
    for box in boxes:
        sel = [np.flatnonzero((axes[a] >= box.lo[a]) & (axes[a] < box.hi[a])) for a in range(3)]
        if all(len(s) for s in sel):
            vol[np.ix_(*sel)] = box.class_id
    return vol
