# Minimal sparse 3D convolution by gather-multiply-accumulate over kernel
# offsets, plus the stride-2 variant used for downsampling
import numpy as np
from dataclasses import dataclass
from typing import Optional

from voxrefine.errors import InvalidFactor, InvalidScale, ShapeError
from voxrefine.voxel.grid import SCALES
from voxrefine.voxel.sparse import SparseVoxelGrid, pack_keys, unpack_keys

SUBMANIFOLD = "submanifold"
EXPANDING = "expanding"


@dataclass
class SparseConvSpec:
    in_channels: int
    out_channels: int
    weights: np.ndarray  # (k, k, k, in, out)
    bias: np.ndarray = None  # (out,)
    kernel_extent: int = 3
    stride: int = 1
    mode: str = SUBMANIFOLD
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        k = self.kernel_extent
        if self.stride == 1 and k % 2 != 1:
            raise ShapeError(f"stride-1 kernels need an odd extent, got {k}")
        if self.stride == 2 and k != 2:
            raise ShapeError(f"stride-2 kernels have extent 2, got {k}")
        if self.stride not in (1, 2):
            raise InvalidFactor(f"stride must be 1 or 2, got {self.stride}")
        if self.mode not in (SUBMANIFOLD, EXPANDING):
            raise ValueError(f"unknown sparse conv mode '{self.mode}'")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        expected = (k, k, k, self.in_channels, self.out_channels)
        if self.weights.shape != expected:
            raise ShapeError(f"weights {self.weights.shape} != {expected}")
        if self.bias is None:
            self.bias = np.zeros(self.out_channels)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(self.out_channels)

    @classmethod
    def seeded(cls, in_channels: int, out_channels: int, seed: int,
               kernel_extent=3, stride=1, mode=SUBMANIFOLD, bias=True) -> "SparseConvSpec":
        rng = np.random.default_rng(seed)
        k = kernel_extent
        scale = 1.0 / np.sqrt(k ** 3 * in_channels)
        weights = rng.normal(0.0, scale, size=(k, k, k, in_channels, out_channels))
        b = rng.normal(0.0, 0.1, size=out_channels) if bias else None
        return cls(in_channels, out_channels, weights, b, k, stride, mode, seed)

    @classmethod
    def zeros(cls, in_channels: int, out_channels: int, kernel_extent=3,
              stride=1, mode=SUBMANIFOLD) -> "SparseConvSpec":
        k = kernel_extent
        return cls(in_channels, out_channels,
                   np.zeros((k, k, k, in_channels, out_channels)),
                   None, k, stride, mode)

    @classmethod
    def identity(cls, channels: int, kernel_extent=3, mode=SUBMANIFOLD) -> "SparseConvSpec":
        k = kernel_extent
        weights = np.zeros((k, k, k, channels, channels))
        weights[k // 2, k // 2, k // 2] = np.eye(channels)
        return cls(channels, channels, weights, None, k, 1, mode)

    def offsets(self) -> np.ndarray:
        # Kernel taps in lexicographic order; centred for stride 1
        k = self.kernel_extent
        r = np.arange(k) - (k // 2 if self.stride == 1 else 0)
        gx, gy, gz = np.meshgrid(r, r, r, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def tap_weights(self) -> np.ndarray:
        k = self.kernel_extent
        return self.weights.reshape(k ** 3, self.in_channels, self.out_channels)


def _dilate(grid: SparseVoxelGrid, offsets: np.ndarray) -> np.ndarray:
    # Input set dilated by the kernel footprint, clipped to the grid
    cand = (grid.coords[:, None, :] + offsets[None, :, :]).reshape(-1, 3)
    cand = cand[grid.geometry.contains(cand)]
    return unpack_keys(np.unique(pack_keys(cand)))


def sparse_conv(grid: SparseVoxelGrid, spec: SparseConvSpec) -> SparseVoxelGrid:
    if spec.in_channels != grid.channels:
        raise ShapeError(f"conv expects {spec.in_channels} channels, grid has {grid.channels}")
    if spec.stride == 2:
        return strided_conv(grid, spec)

    offsets = spec.offsets()
    if spec.mode == SUBMANIFOLD:
        out_coords = grid.coords
    else:
        out_coords = _dilate(grid, offsets)

    out = np.zeros((len(out_coords), spec.out_channels))
    # Outside the grid reads as zero
    for tap, w in zip(offsets, spec.tap_weights()):
        rows = grid.lookup_rows(out_coords + tap)
        hit = rows >= 0
        if np.any(hit):
            out[hit] += grid.features[rows[hit]] @ w
    out += spec.bias
    return SparseVoxelGrid(grid.geometry, out_coords, out)


def _parent_geometry(grid: SparseVoxelGrid):
    scale = grid.scale * 2
    if scale not in SCALES:
        raise InvalidScale(f"cannot coarsen scale {grid.scale} by 2")
    return grid.geometry.at_scale(scale)


def strided_conv(grid: SparseVoxelGrid, spec: SparseConvSpec) -> SparseVoxelGrid:
    # Non-overlapping 2x2x2 kernel, stride 2: output set is the image of the
    # input set under integer division
    if spec.stride != 2:
        raise ShapeError("strided_conv needs a stride-2 spec")
    if spec.in_channels != grid.channels:
        raise ShapeError(f"conv expects {spec.in_channels} channels, grid has {grid.channels}")
    geometry = _parent_geometry(grid)
    if len(grid) == 0:
        return SparseVoxelGrid.empty(geometry, spec.out_channels)

    parents = unpack_keys(np.unique(pack_keys(grid.coords // 2)))
    out = np.zeros((len(parents), spec.out_channels))
    for tap, w in zip(spec.offsets(), spec.tap_weights()):
        rows = grid.lookup_rows(parents * 2 + tap)
        hit = rows >= 0
        if np.any(hit):
            out[hit] += grid.features[rows[hit]] @ w
    out += spec.bias
    return SparseVoxelGrid(geometry, parents, out)


def mean_pool(grid: SparseVoxelGrid) -> SparseVoxelGrid:
    geometry = _parent_geometry(grid)
    if len(grid) == 0:
        return SparseVoxelGrid.empty(geometry, grid.channels)
    keys, inverse = np.unique(pack_keys(grid.coords // 2), return_inverse=True)
    sums = np.zeros((len(keys), grid.channels))
    np.add.at(sums, inverse, grid.features)
    counts = np.bincount(inverse, minlength=len(keys)).astype(np.float64)
    return SparseVoxelGrid(geometry, unpack_keys(keys), sums / counts[:, None])


def downsample(grid: SparseVoxelGrid, factor: int = 2, mode: str = "conv",
               spec: Optional[SparseConvSpec] = None) -> SparseVoxelGrid:
    if factor != 2:
        raise InvalidFactor(f"downsample supports factor 2, got {factor}")
    if mode == "mean":
        return mean_pool(grid)
    if mode != "conv":
        raise ValueError(f"unknown downsample mode '{mode}'")
    if spec is None:
        raise ValueError("conv downsampling needs a stride-2 SparseConvSpec")
    return strided_conv(grid, spec)
