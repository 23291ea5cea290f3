# Amanatides-Woo voxel traversal clipped to the grid box
import numpy as np
from typing import Iterator, List, Tuple

from voxrefine.voxel.grid import GridGeometry, VoxelIndex

_INF = float("inf")


def iter_walk(origin, target, geom: GridGeometry, margin=0.0) -> Iterator[Tuple[Tuple[int, int, int], float]]:
    # Every cell the segment origin -> target (extended `margin` meters past
    # the target) passes through, in order, with the ray parameter at which
    # it is entered; t = 1 is the target
    size = geom.size
    gorigin = geom.origin
    dims = geom.dims
    p0 = [(float(origin[a]) - gorigin[a]) / size for a in range(3)]
    p1 = [(float(target[a]) - gorigin[a]) / size for a in range(3)]
    d = [p1[a] - p0[a] for a in range(3)]
    length = (d[0] ** 2 + d[1] ** 2 + d[2] ** 2) ** 0.5
    if length == 0.0:
        v = tuple(int(np.floor(p)) for p in p0)
        inside = all(0 <= v[a] < dims[a] for a in range(3))
        if inside:
            yield v, 0.0
        return

    t_lo, t_hi = 0.0, 1.0 + margin / (length * size)
    for a in range(3):
        if d[a] == 0.0:
            if p0[a] < 0.0 or p0[a] >= dims[a]:
                return
            continue
        ta, tb = (0.0 - p0[a]) / d[a], (dims[a] - p0[a]) / d[a]
        if ta > tb:
            ta, tb = tb, ta
        t_lo, t_hi = max(t_lo, ta), min(t_hi, tb)
    if t_lo > t_hi:
        return

    v, step, t_max, t_delta = [0, 0, 0], [0, 0, 0], [_INF] * 3, [_INF] * 3
    for a in range(3):
        pa = p0[a] + t_lo * d[a]
        v[a] = min(max(int(np.floor(pa)), 0), dims[a] - 1)
        if d[a] > 0:
            step[a] = 1
            t_max[a] = (v[a] + 1 - p0[a]) / d[a]
            t_delta[a] = 1.0 / d[a]
        elif d[a] < 0:
            step[a] = -1
            t_max[a] = (v[a] - p0[a]) / d[a]
            t_delta[a] = -1.0 / d[a]

    t_enter = t_lo
    while True:
        yield (v[0], v[1], v[2]), t_enter
        if t_max[0] <= t_max[1] and t_max[0] <= t_max[2]:
            a = 0
        elif t_max[1] <= t_max[2]:
            a = 1
        else:
            a = 2
        if t_max[a] > t_hi:
            break
        v[a] += step[a]
        if v[a] < 0 or v[a] >= dims[a]:
            break
        t_enter = t_max[a]
        t_max[a] += t_delta[a]


def walk(origin, target, geom: GridGeometry, margin=0.0) -> List[Tuple[Tuple[int, int, int], float]]:
    return list(iter_walk(origin, target, geom, margin))


def traverse(origin, target, geom: GridGeometry, margin=0.0) -> List[VoxelIndex]:
    return [VoxelIndex(c[0], c[1], c[2], geom.scale)
            for c, _ in walk(origin, target, geom, margin)]


def traverse_coords(origin, target, geom: GridGeometry, margin=0.0) -> np.ndarray:
    cells = walk(origin, target, geom, margin)
    return np.array([c for c, _ in cells], dtype=np.int64).reshape(-1, 3)


def grid_diagonal(geom: GridGeometry) -> float:
    return float(np.linalg.norm(geom.extent()))
