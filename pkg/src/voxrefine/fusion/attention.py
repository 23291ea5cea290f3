# LiDAR-guided queries and forward-only deformable cross-attention from
# voxel centres into multi-camera feature maps
import logging
import numpy as np
from dataclasses import dataclass
from scipy.special import softmax
from typing import Dict, List, Optional

from voxrefine.errors import ShapeError
from voxrefine.fusion.camera import CameraModel, FeatureMap2D, project_points, sample_points
from voxrefine.generation.probability import module_rng
from voxrefine.voxel.sparse import SparseVoxelGrid

logger = logging.getLogger(__name__)


@dataclass
class DeformableAttnParams:
    offsets: np.ndarray  # (n_ref, 2) pixels
    weight_logits: np.ndarray  # (n_ref,)
    value_proj: np.ndarray  # (C_I, C)
    output_proj: np.ndarray  # (C, C)
    query_offset_proj: Optional[np.ndarray] = None  # (C, n_ref * 2)
    residual: bool = True
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        self.offsets = np.asarray(self.offsets, dtype=np.float64).reshape(-1, 2)
        self.weight_logits = np.asarray(self.weight_logits, dtype=np.float64).reshape(-1)
        self.value_proj = np.asarray(self.value_proj, dtype=np.float64)
        self.output_proj = np.asarray(self.output_proj, dtype=np.float64)
        if len(self.weight_logits) != self.n_ref:
            raise ShapeError("one weight logit per reference point")
        if self.value_proj.shape[1] != self.output_proj.shape[0] \
                or self.output_proj.shape[0] != self.output_proj.shape[1]:
            raise ShapeError("value_proj must be C_I x C and output_proj C x C")
        if self.query_offset_proj is not None:
            self.query_offset_proj = np.asarray(self.query_offset_proj, dtype=np.float64)
            if self.query_offset_proj.shape != (self.channels, 2 * self.n_ref):
                raise ShapeError("query_offset_proj must be C x 2 n_ref")

    @property
    def n_ref(self) -> int:
        return self.offsets.shape[0]

    @property
    def image_channels(self) -> int:
        return self.value_proj.shape[0]

    @property
    def channels(self) -> int:
        return self.output_proj.shape[1]

    def attention_weights(self) -> np.ndarray:
        return softmax(self.weight_logits)

    @classmethod
    def seeded(cls, image_channels: int, channels: int, seed: int, n_ref=4,
               offset_scale=2.0, query_conditioned=False, residual=True) -> "DeformableAttnParams":
        rng = module_rng(seed, "attention")
        offsets = rng.normal(0.0, offset_scale, size=(n_ref, 2))
        logits = rng.normal(0.0, 1.0, size=n_ref)
        value_proj = rng.normal(0.0, 1.0 / np.sqrt(image_channels), size=(image_channels, channels))
        output_proj = rng.normal(0.0, 1.0 / np.sqrt(channels), size=(channels, channels))
        query_proj = None
        if query_conditioned:
            query_proj = rng.normal(0.0, offset_scale / np.sqrt(channels),
                                    size=(channels, 2 * n_ref))
        return cls(offsets, logits, value_proj, output_proj, query_proj, residual, seed)


@dataclass
class QuerySet:
    base: SparseVoxelGrid  # Q_v
    guided: SparseVoxelGrid  # Q'_v

    def __len__(self) -> int:
        return len(self.guided)


def guide_queries(dense: SparseVoxelGrid, qv_seed: Optional[int], std=0.02) -> QuerySet:
    # Q'_v = densified LiDAR feature + seeded base query, one per voxel.
    # qv_seed None gives zero base queries.
    if dense.scale != 4:
        raise ShapeError(f"queries live at scale 4, got scale {dense.scale}")
    if qv_seed is None or std == 0:
        base = np.zeros_like(dense.features)
    else:
        base = module_rng(qv_seed, "queries").normal(0.0, std, size=dense.features.shape)
    return QuerySet(dense.with_features(base), dense.with_features(dense.features + base))


def _reference_points(params: DeformableAttnParams, uv: np.ndarray,
                      queries: np.ndarray) -> np.ndarray:
    # (N, n_ref, 2) sampling locations around each projected centre
    offsets = np.broadcast_to(params.offsets, (len(uv), params.n_ref, 2))
    if params.query_offset_proj is not None:
        offsets = offsets + (queries @ params.query_offset_proj).reshape(-1, params.n_ref, 2)
    return uv[:, None, :] + offsets


def fuse(queries: QuerySet, rig: List[CameraModel], maps: FeatureMap2D,
         params: DeformableAttnParams, stats: Optional[Dict] = None) -> SparseVoxelGrid:
    guided = queries.guided
    if len(maps) != len(rig):
        raise ShapeError(f"{len(maps)} feature maps for {len(rig)} cameras")
    if maps.channels != params.image_channels:
        raise ShapeError(f"maps have {maps.channels} channels, attention expects "
                         f"{params.image_channels}")
    if guided.channels != params.channels:
        raise ShapeError(f"queries have {guided.channels} channels, attention expects "
                         f"{params.channels}")

    centers = guided.geometry.centers(guided.coords)
    weights = params.attention_weights()
    acc = np.zeros((len(guided), params.channels))
    n_hit = np.zeros(len(guided), dtype=np.int64)
    # Cameras in id order
    for i, cam in enumerate(rig):
        uv, _, hit = project_points(cam, centers)
        if not np.any(hit):
            continue
        ref = _reference_points(params, uv[hit], guided.features[hit])
        sampled = sample_points(maps.maps[i], ref[..., 0], ref[..., 1])
        values = sampled @ params.value_proj
        attended = np.einsum("j,njc->nc", weights, values)
        acc[hit] += attended @ params.output_proj
        n_hit[hit] += 1

    seen = n_hit > 0
    acc[seen] /= n_hit[seen, None]
    misses = int(np.count_nonzero(~seen))
    if misses:
        logger.debug("%d of %d voxels are visible to no camera", misses, len(guided))
    if stats is not None:
        stats.update(misses=misses, voxels=len(guided))
    if params.residual:
        acc += guided.features
    return guided.with_features(acc)
