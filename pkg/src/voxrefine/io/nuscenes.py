# nuScenes-Occupancy sparse annotations
import numpy as np
from pathlib import Path

from voxrefine.errors import DatasetNotFound, ParseError

NUSCENES_OCC_DIMS = (512, 512, 40)


def read_occupancy_npy(path, dims=NUSCENES_OCC_DIMS, empty_class=0) -> np.ndarray:
    # Dense uint16 volume from either (N, 2) rows of (flat index, class),
    # flat index x-slowest, or (N, 4) rows of (z, y, x, class)
    path = Path(path)
    if not path.is_file():
        raise DatasetNotFound(f"missing file: {path}")
    try:
        rows = np.load(path, allow_pickle=False)
    except ValueError as e:
        raise ParseError(f"{path}: {e}")
    rows = np.asarray(rows)
    vol = np.full(dims, empty_class, dtype=np.uint16)
    if rows.ndim != 2 or rows.shape[1] not in (2, 4):
        raise ParseError(f"{path}: unsupported annotation layout {rows.shape}; "
                         "expected (N, 2) index/class or (N, 4) z/y/x/class rows")
    rows = rows.astype(np.int64)
    if rows.shape[1] == 2:
        if len(rows) and (rows[:, 0].min() < 0 or rows[:, 0].max() >= vol.size):
            raise ParseError(f"{path}: flat index out of range")
        vol.reshape(-1)[rows[:, 0]] = rows[:, 1]
    else:
        x, y, z = rows[:, 2], rows[:, 1], rows[:, 0]
        inside = (x >= 0) & (x < dims[0]) & (y >= 0) & (y < dims[1]) & (z >= 0) & (z < dims[2])
        if not np.all(inside):
            raise ParseError(f"{path}: {int(np.count_nonzero(~inside))} rows outside {dims}")
        vol[x, y, z] = rows[:, 3]
    return vol
