# Occlusion-aware occupancy head and the multi-scale decoder. Both emit
# 21-channel outputs: semantic class scores followed by the three
# occlusion-state scores.
import logging
import numpy as np
from scipy.special import softmax
from typing import List, Sequence, Tuple

from voxrefine.errors import ShapeError
from voxrefine.generation.probability import module_rng, module_seed, seeded_linear
from voxrefine.lidar.sparse_conv import SparseConvSpec, sparse_conv
from voxrefine.occlusion.labels import EMPTY_CLASS, OcclusionLabel
from voxrefine.voxel.grid import child_offsets, subdivide_coords
from voxrefine.voxel.sparse import SparseVoxelGrid

logger = logging.getLogger(__name__)

SEMANTIC_CLASSES = 18  # 17 semantic + empty
OCCLUSION_STATES = 3


def assemble_output(sem: np.ndarray, occ: np.ndarray,
                    n_classes=SEMANTIC_CLASSES) -> np.ndarray:
    # [..., n_classes] + [..., 3] -> [..., n_classes + 3]
    sem, occ = np.asarray(sem, dtype=np.float64), np.asarray(occ, dtype=np.float64)
    if sem.shape[-1] != n_classes:
        raise ShapeError(f"semantic part has {sem.shape[-1]} channels, expected {n_classes}")
    if occ.shape[-1] != OCCLUSION_STATES:
        raise ShapeError(f"occlusion part has {occ.shape[-1]} channels, expected 3")
    if sem.shape[:-1] != occ.shape[:-1]:
        raise ShapeError(f"spatial shapes differ: {sem.shape[:-1]} vs {occ.shape[:-1]}")
    return np.concatenate([sem, occ], axis=-1)


def split_output(o: np.ndarray, n_classes=SEMANTIC_CLASSES) -> Tuple[np.ndarray, np.ndarray]:
    if o.shape[-1] != n_classes + OCCLUSION_STATES:
        raise ShapeError(f"output has {o.shape[-1]} channels, expected {n_classes + 3}")
    return o[..., :n_classes], o[..., n_classes:]


def decoder_input_mask(o: np.ndarray, n_classes=SEMANTIC_CLASSES) -> np.ndarray:
    # Voxels predicted NonOccluded or Occluded
    _, occ = split_output(o, n_classes)
    return np.argmax(occ, axis=-1) != OcclusionLabel.EMPTY


def predicted_labels(o: np.ndarray, n_classes=SEMANTIC_CLASSES) -> Tuple[np.ndarray, np.ndarray]:
    # (semantic labels, occlusion labels); Occluded counts as non-empty, so
    # both non-empty states take the semantic argmax
    sem, occ = split_output(o, n_classes)
    occ_label = np.argmax(occ, axis=-1).astype(np.uint8)
    sem_label = np.argmax(sem, axis=-1).astype(np.uint16)
    sem_label[occ_label == OcclusionLabel.EMPTY] = EMPTY_CLASS
    return sem_label, occ_label


class OcclusionHead:
    # conv -> per-channel normalisation -> ReLU -> conv, on the sparse scale-4 map
    def __init__(self, channels: int, hidden: int, seed: int,
                 n_classes=SEMANTIC_CLASSES) -> None:
        self.n_classes = n_classes
        self.conv1 = SparseConvSpec.seeded(channels, hidden, module_seed(seed, "head.conv1"))
        self.conv2 = SparseConvSpec.seeded(hidden, n_classes + OCCLUSION_STATES,
                                           module_seed(seed, "head.conv2"))

    def __call__(self, fe: SparseVoxelGrid) -> Tuple[np.ndarray, np.ndarray]:
        # Returns per-voxel (semantic probabilities, occlusion probabilities)
        if len(fe) == 0:
            return np.zeros((0, self.n_classes)), np.zeros((0, OCCLUSION_STATES))
        h = sparse_conv(fe, self.conv1)
        x = h.features
        x = (x - x.mean(axis=0)) / np.sqrt(x.var(axis=0) + 1e-5)
        x = np.maximum(x, 0.0)
        logits = sparse_conv(h.with_features(x), self.conv2).features
        return (softmax(logits[:, :self.n_classes], axis=1),
                softmax(logits[:, self.n_classes:], axis=1))


class OccupancyDecoder:
    # Upsamples selected scale-4 voxels to their 64 scale-1 children with a
    # seeded linear stack over [parent feature, child position]
    def __init__(self, channels: int, hidden: Sequence[int], seed: int,
                 n_classes=SEMANTIC_CLASSES) -> None:
        self.n_classes = n_classes
        rng = module_rng(seed, "decoder")
        widths = [channels + 3] + list(hidden) + [n_classes + OCCLUSION_STATES]
        self.layers: List[Tuple[np.ndarray, np.ndarray]] = [
            seeded_linear(rng, a, b) for a, b in zip(widths[:-1], widths[1:])]

    def __call__(self, parents: SparseVoxelGrid, parent_output: np.ndarray,
                 fine_geometry) -> SparseVoxelGrid:
        # parents: selected scale-4 voxels with their F_E^4 features;
        # parent_output: their (N, n_classes + 3) scores
        n_out = self.n_classes + OCCLUSION_STATES
        if parent_output.shape != (len(parents), n_out):
            raise ShapeError(f"parent output {parent_output.shape} != {(len(parents), n_out)}")
        if len(parents) == 0:
            return SparseVoxelGrid.empty(fine_geometry, n_out)

        offs = child_offsets(4)
        children = subdivide_coords(parents.coords, 4)
        position = np.tile((offs + 0.5) / 4.0 - 0.5, (len(parents), 1))
        x = np.concatenate([np.repeat(parents.features, len(offs), axis=0), position], axis=1)
        for i, (w, b) in enumerate(self.layers):
            x = x @ w + b
            if i < len(self.layers) - 1:
                x = np.maximum(x, 0.0)

        prior = np.repeat(np.log(np.clip(parent_output, 1e-12, None)), len(offs), axis=0)
        x = x + prior
        sem = softmax(x[:, :self.n_classes], axis=1)
        occ = softmax(x[:, self.n_classes:], axis=1)
        keep = fine_geometry.contains(children)
        out = assemble_output(sem, occ, self.n_classes)
        return SparseVoxelGrid(fine_geometry, children[keep], out[keep])
