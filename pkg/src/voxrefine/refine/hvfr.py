# Hierarchical voxel feature refinement: score scale-4 voxels, pick the
# semi-fine and fine sets, gather finer LiDAR + image features for their
# children and fold the result back into the scale-4 map
import logging
import numpy as np
from dataclasses import dataclass
from scipy.special import expit
from typing import Callable, Dict, List, Optional, Set

from voxrefine.errors import ShapeError
from voxrefine.fusion.camera import CameraModel, FeatureMap2D, gather_image_features
from voxrefine.generation.probability import module_rng, module_seed, seeded_linear
from voxrefine.lidar.sparse_conv import SparseConvSpec, sparse_conv, strided_conv
from voxrefine.voxel.grid import VoxelIndex, subdivide_coords
from voxrefine.voxel.sparse import SparseVoxelGrid, pack_keys, unpack_keys

logger = logging.getLogger(__name__)

DEFAULT_TAU1 = 0.4
DEFAULT_TAU2 = 0.7

# Maps (N, 3) scale-4 coords to (N,) scores in [0, 1]
Scorer = Callable[[np.ndarray], np.ndarray]


@dataclass
class ImportanceMap:
    grid: SparseVoxelGrid  # one channel, the score R

    def __post_init__(self) -> None:
        if self.grid.channels != 1:
            raise ShapeError("importance map has exactly one channel")
        s = self.scores
        if len(s) and (np.min(s) < 0 or np.max(s) > 1 or not np.all(np.isfinite(s))):
            raise ValueError("importance scores must lie in [0, 1]")

    @property
    def scores(self) -> np.ndarray:
        return self.grid.features[:, 0]

    @property
    def coords(self) -> np.ndarray:
        return self.grid.coords

    def __len__(self) -> int:
        return len(self.grid)

    @classmethod
    def from_scores(cls, like: SparseVoxelGrid, scores: np.ndarray) -> "ImportanceMap":
        return cls(like.with_features(np.asarray(scores, dtype=np.float64).reshape(-1, 1)))


@dataclass
class RefinementSets:
    semi_fine: np.ndarray  # (|S|, 3) scale-4 coords, sorted
    fine: np.ndarray  # (|F|, 3)
    tau1: float
    tau2: float

    @property
    def empty(self) -> bool:
        return len(self.semi_fine) == 0 and len(self.fine) == 0

    def semi_fine_set(self) -> Set[VoxelIndex]:
        return {VoxelIndex(*map(int, c), 4) for c in self.semi_fine}

    def fine_set(self) -> Set[VoxelIndex]:
        return {VoxelIndex(*map(int, c), 4) for c in self.fine}


def estimate_importance(fm: SparseVoxelGrid, rie: Optional[SparseConvSpec] = None,
                        scorer: Optional[Scorer] = None) -> ImportanceMap:
    # R = sigmoid(conv(F_M^4)); an oracle scorer may stand in for the conv
    if scorer is not None:
        return ImportanceMap.from_scores(fm, np.clip(scorer(fm.coords), 0.0, 1.0))
    if rie is None:
        raise ValueError("need a RIE conv spec or a scorer")
    if rie.out_channels != 1:
        raise ShapeError(f"RIE conv must output 1 channel, got {rie.out_channels}")
    logits = sparse_conv(fm, rie)
    return ImportanceMap(logits.with_features(expit(logits.features)))


def select_sets(R: ImportanceMap, tau1=DEFAULT_TAU1, tau2=DEFAULT_TAU2) -> RefinementSets:
    if tau1 < 0 or tau2 < 0:
        raise ValueError(f"thresholds must be non-negative, got {tau1}, {tau2}")
    s = R.scores
    return RefinementSets(R.coords[s >= tau1], R.coords[s >= tau2], tau1, tau2)


class ChildGather:
    # Seeded 1x1 map over [LiDAR child feature, image child feature]
    def __init__(self, lidar_channels: int, image_channels: int,
                 out_channels: int, seed: int, name: str) -> None:
        self.lidar_channels = lidar_channels
        self.image_channels = image_channels
        self.weights, self.bias = seeded_linear(
            module_rng(seed, name), lidar_channels + image_channels, out_channels)

    @classmethod
    def from_weights(cls, weights: np.ndarray, bias: np.ndarray,
                     lidar_channels: int) -> "ChildGather":
        gather = cls.__new__(cls)
        gather.weights = np.asarray(weights, dtype=np.float64)
        gather.bias = np.asarray(bias, dtype=np.float64)
        gather.lidar_channels = lidar_channels
        gather.image_channels = gather.weights.shape[0] - lidar_channels
        return gather

    @property
    def out_channels(self) -> int:
        return self.weights.shape[1]

    def __call__(self, parents: np.ndarray, factor: int, lidar: SparseVoxelGrid,
                 rig: List[CameraModel], maps: FeatureMap2D) -> SparseVoxelGrid:
        if lidar.channels != self.lidar_channels:
            raise ShapeError(f"LiDAR grid has {lidar.channels} channels, expected "
                             f"{self.lidar_channels}")
        if maps is not None and maps.channels != self.image_channels:
            raise ShapeError(f"maps have {maps.channels} channels, expected "
                             f"{self.image_channels}")
        if lidar.scale * factor != 4:
            raise ShapeError(f"scale-{lidar.scale} LiDAR features cannot refine "
                             f"scale 4 by {factor}")
        if len(parents) == 0:
            return SparseVoxelGrid.empty(lidar.geometry, self.out_channels)

        children = subdivide_coords(parents, factor)
        # Children off the edge of a ceil-sized coarse grid are dropped
        children = children[lidar.geometry.contains(children)]
        lidar_feats = lidar.gather(children)
        if rig and maps is not None:
            image_feats = gather_image_features(rig, maps, lidar.geometry.centers(children))
        else:
            image_feats = np.zeros((len(children), self.image_channels))
        fused = np.concatenate([lidar_feats, image_feats], axis=1) @ self.weights + self.bias
        return SparseVoxelGrid(lidar.geometry, children, fused)


def gather_semi_fine(S: np.ndarray, lidar2: SparseVoxelGrid, rig: List[CameraModel],
                     maps: FeatureMap2D, gather: ChildGather) -> SparseVoxelGrid:
    # 8 scale-2 children per semi-fine voxel, fewer on a grid whose dims are
    # not a multiple of 4: children past the edge have no cell to live in
    return gather(np.asarray(S).reshape(-1, 3), 2, lidar2, rig, maps)


def gather_fine(F: np.ndarray, lidar1: SparseVoxelGrid, rig: List[CameraModel],
                maps: FeatureMap2D, gather: ChildGather) -> SparseVoxelGrid:
    # 64 scale-1 children per fine voxel, minus those past the grid edge
    return gather(np.asarray(F).reshape(-1, 3), 4, lidar1, rig, maps)


def _add_aligned(a: SparseVoxelGrid, b: SparseVoxelGrid) -> SparseVoxelGrid:
    # Coordinate-aligned sum over the union, absent rows read zero
    if a.scale != b.scale or a.channels != b.channels:
        raise ShapeError(f"cannot add {a} and {b}")
    keys = np.union1d(a.keys, b.keys)
    coords = unpack_keys(keys)
    return SparseVoxelGrid(a.geometry, coords, a.gather(coords) + b.gather(coords))


def fuse_refined(fine1: SparseVoxelGrid, semi2: SparseVoxelGrid, fm: SparseVoxelGrid,
                 sconv1: SparseConvSpec, sconv2: SparseConvSpec) -> SparseVoxelGrid:
    # F_E^4 = SConv2(SConv1(F_F^1) + F_S^2) + F_M^4 over F_M^4's coordinates
    if fine1.scale != 1 or semi2.scale != 2 or fm.scale != 4:
        raise ShapeError(f"expected scales 1/2/4, got {fine1.scale}/{semi2.scale}/{fm.scale}")
    if sconv1.stride != 2 or sconv2.stride != 2:
        raise ShapeError("SConv1 and SConv2 must be stride-2")
    if sconv2.out_channels != fm.channels:
        raise ShapeError(f"SConv2 outputs {sconv2.out_channels} channels, F_M^4 has "
                         f"{fm.channels}")
    if len(fine1) == 0 and len(semi2) == 0:
        return fm

    if len(fine1):
        mid = strided_conv(fine1, sconv1)
        mid = _add_aligned(mid, semi2) if len(semi2) else mid
    else:
        mid = semi2
    if mid.channels != sconv2.in_channels:
        raise ShapeError(f"SConv2 expects {sconv2.in_channels} channels, got {mid.channels}")
    refined = strided_conv(mid, sconv2)

    rows = refined.lookup_rows(fm.coords)
    hit = rows >= 0
    out = fm.features.copy()
    out[hit] = out[hit] + refined.features[rows[hit]]
    dropped = len(refined) - int(np.count_nonzero(hit))
    if dropped:
        logger.debug("%d refined voxels fall outside F_M^4 and are dropped", dropped)
    return fm.with_features(out)


def occupancy_fraction_scorer(gt_occupied: np.ndarray) -> Scorer:
    # Oracle scorer: share of a scale-4 voxel's 64 scale-1 children that are
    # GT-occupied (children off the grid count as empty)
    occ = np.asarray(gt_occupied, dtype=bool)
    X, Y, Z = occ.shape
    pad = np.zeros((-(-X // 4) * 4, -(-Y // 4) * 4, -(-Z // 4) * 4), dtype=np.float64)
    pad[:X, :Y, :Z] = occ
    frac = pad.reshape(pad.shape[0] // 4, 4, pad.shape[1] // 4, 4,
                       pad.shape[2] // 4, 4).mean(axis=(1, 3, 5))

    def score(coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        return frac[coords[:, 0], coords[:, 1], coords[:, 2]]

    return score


def foreground_fractions(R: ImportanceMap, sets: RefinementSets,
                         scorer: Scorer) -> Dict[str, float]:
    # Occupied share of the scale-1 volume inside the coarse remainder, the
    # semi-fine set and the fine set (NaN for an empty set)
    def share(coords: np.ndarray) -> float:
        return float(np.mean(scorer(coords))) if len(coords) else float("nan")

    in_s = np.isin(pack_keys(R.coords), pack_keys(sets.semi_fine))
    return {"coarse": share(R.coords[~in_s]),
            "semi_fine": share(sets.semi_fine),
            "fine": share(sets.fine)}


class HierarchicalRefiner:
    # The full refinement stage with its seeded parameters
    def __init__(self, channels: int, lidar2_channels: int, lidar1_channels: int,
                 image_channels: int, seed: int, tau1=DEFAULT_TAU1, tau2=DEFAULT_TAU2) -> None:
        self.tau1 = tau1
        self.tau2 = tau2
        self.rie = SparseConvSpec.seeded(channels, 1, module_seed(seed, "hvfr.rie"))
        self.semi_gather = ChildGather(lidar2_channels, image_channels, channels, seed,
                                       "hvfr.semi")
        self.fine_gather = ChildGather(lidar1_channels, image_channels, channels, seed,
                                       "hvfr.fine")
        self.sconv1 = SparseConvSpec.seeded(channels, channels,
                                            module_seed(seed, "hvfr.sconv1"),
                                            kernel_extent=2, stride=2)
        self.sconv2 = SparseConvSpec.seeded(channels, channels,
                                            module_seed(seed, "hvfr.sconv2"),
                                            kernel_extent=2, stride=2)

    def __call__(self, fm: SparseVoxelGrid, lidar: Dict[int, SparseVoxelGrid],
                 rig: List[CameraModel], maps: FeatureMap2D,
                 scorer: Optional[Scorer] = None, stats: Optional[Dict] = None):
        R = estimate_importance(fm, self.rie, scorer)
        sets = select_sets(R, self.tau1, self.tau2)
        semi = gather_semi_fine(sets.semi_fine, lidar[2], rig, maps, self.semi_gather)
        fine = gather_fine(sets.fine, lidar[1], rig, maps, self.fine_gather)
        fe = fuse_refined(fine, semi, fm, self.sconv1, self.sconv2)
        if stats is not None:
            stats.update(semi_fine=len(sets.semi_fine), fine=len(sets.fine),
                         semi_children=len(semi), fine_children=len(fine),
                         residual_identity=sets.empty)
        logger.info("refined |S|=%d |F|=%d of %d voxels", len(sets.semi_fine),
                    len(sets.fine), len(fm))
        return fe, R, sets
