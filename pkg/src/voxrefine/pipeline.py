# The forward pass: voxelize -> multi-scale LiDAR -> densify -> camera
# fusion -> hierarchical refinement -> occupancy head -> decoder, with a
# per-stage report and, when ground truth is given, losses and metrics
import logging
import time
import numpy as np
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from voxrefine.config import PipelineConfig
from voxrefine.errors import EmptyInput
from voxrefine.fusion.attention import DeformableAttnParams, fuse, guide_queries
from voxrefine.fusion.camera import CameraModel, FeatureMap2D
from voxrefine.fusion.densify import MultiScaleFeatures, densify
from voxrefine.lidar.backbone import BACKBONE_SCALES, LidarBackbone
from voxrefine.lidar.pointcloud import PointCloud
from voxrefine.losses.losses import LossReport, compute_losses
from voxrefine.losses.metrics import MetricsReport, compute_metrics
from voxrefine.occlusion.head import (OCCLUSION_STATES, SEMANTIC_CLASSES, OccupancyDecoder,
                                      OcclusionHead, assemble_output, decoder_input_mask,
                                      predicted_labels)
from voxrefine.occlusion.labels import (EMPTY_CLASS, IGNORE_LABEL, coarsen_occlusion,
                                        coarsen_semantic, non_empty_mask)
from voxrefine.refine.hvfr import (HierarchicalRefiner, ImportanceMap, RefinementSets,
                                   occupancy_fraction_scorer)
from voxrefine.voxel.grid import GridGeometry
from voxrefine.voxel.sparse import SparseVoxelGrid

logger = logging.getLogger(__name__)


class StageRecord:
    def __init__(self, name: str, seconds: float, voxels: int, shape: Tuple[int, ...]) -> None:
        self.name = name
        self.seconds = seconds
        self.voxels = voxels
        self.shape = shape

    def to_dict(self) -> Dict:
        return {"stage": self.name, "seconds": self.seconds, "voxels": self.voxels,
                "shape": list(self.shape)}

    def __str__(self) -> str:
        shape = "x".join(str(s) for s in self.shape)
        return f"{self.name},{self.seconds:.6f},{self.voxels},{shape}"


class StageReport:
    header = "stage,seconds,voxels,shape"

    def __init__(self) -> None:
        self.records: List[StageRecord] = []
        self.notes: Dict = {}

    @contextmanager
    def stage(self, name: str):
        # The body sets out["grid"] (or out["voxels"] / out["shape"]) for the record
        out: Dict = {}
        start = time.perf_counter()
        yield out
        seconds = time.perf_counter() - start
        grid = out.get("grid")
        voxels = out.get("voxels", len(grid) if grid is not None else 0)
        shape = out.get("shape", (len(grid), grid.channels) if grid is not None else ())
        self.records.append(StageRecord(name, seconds, voxels, tuple(shape)))
        logger.info("%-10s %8.3fs %7d voxels", name, seconds, voxels)

    def seconds(self, name: str) -> float:
        return sum(r.seconds for r in self.records if r.name == name)

    def to_dict(self) -> Dict:
        return {"stages": [r.to_dict() for r in self.records], "notes": dict(self.notes)}

    def __str__(self) -> str:
        return "\n".join([self.header] + [str(r) for r in self.records])


@dataclass
class ForwardResult:
    lidar: Dict[int, SparseVoxelGrid]
    fm: SparseVoxelGrid  # F_M^4
    fe: SparseVoxelGrid  # F_E^4
    importance: ImportanceMap
    sets: RefinementSets
    o4: SparseVoxelGrid  # 21 channels on F_E^4's voxels
    o1: SparseVoxelGrid  # 21 channels on the decoded scale-1 children
    report: StageReport
    losses: Optional[LossReport] = None
    metrics: Optional[MetricsReport] = None
    stats: Dict = field(default_factory=dict)

    def label_volumes(self, scale: int) -> Tuple[np.ndarray, np.ndarray]:
        # Dense (semantic, occlusion) predictions; voxels without output are empty
        grid = self.o4 if scale == 4 else self.o1
        n_classes = grid.channels - OCCLUSION_STATES
        sem = np.full(grid.geometry.dims, EMPTY_CLASS, dtype=np.uint16)
        occ = np.zeros(grid.geometry.dims, dtype=np.uint8)
        if len(grid):
            s, o = predicted_labels(grid.features, n_classes)
            c = grid.coords
            sem[c[:, 0], c[:, 1], c[:, 2]] = s
            occ[c[:, 0], c[:, 1], c[:, 2]] = o
        return sem, occ


def _subset(grid: SparseVoxelGrid, mask: np.ndarray) -> SparseVoxelGrid:
    return SparseVoxelGrid(grid.geometry, grid.coords[mask], grid.features[mask])


class Pipeline:
    def __init__(self, config: PipelineConfig, geometry: GridGeometry,
                 n_classes=SEMANTIC_CLASSES) -> None:
        self.config = config
        self.geometry = geometry.at_scale(1)
        self.n_classes = n_classes
        seed = config.seeds.root
        widths = config.channels.lidar
        C = widths[4]
        att = config.attention
        self.backbone = LidarBackbone(self.geometry, widths, seed, config.lidar.downsample)
        self.attention = DeformableAttnParams.seeded(
            config.channels.image, C, seed, att.n_ref, att.offset_scale,
            att.query_conditioned, att.residual)
        self.refiner = HierarchicalRefiner(C, widths[2], widths[1], config.channels.image,
                                           seed, config.refine.tau1, config.refine.tau2)
        self.head = OcclusionHead(C, config.occlusion.head_hidden, seed, n_classes)
        self.decoder = OccupancyDecoder(C, config.decoder.hidden, seed, n_classes)

    def lidar_features(self, pc: PointCloud, stats: Dict) -> Dict[int, SparseVoxelGrid]:
        if len(pc) == 0:
            logger.warning("empty point cloud: every LiDAR scale is empty")
            return {s: SparseVoxelGrid.empty(self.geometry.at_scale(s), self.config.channels.lidar[s])
                    for s in BACKBONE_SCALES}
        return self.backbone(pc, stats)

    def run(self, pc: PointCloud, rig: List[CameraModel], maps: FeatureMap2D,
            gt: Optional[np.ndarray] = None, gt_occlusion: Optional[np.ndarray] = None) -> ForwardResult:
        cfg = self.config
        report = StageReport()
        stats: Dict = {}
        geom4 = self.geometry.at_scale(4)
        C = cfg.channels.lidar[4]

        with report.stage("lidar") as out:
            lidar = self.lidar_features(pc, stats)
            out["grid"] = lidar[1]
        for s in BACKBONE_SCALES[1:]:
            report.notes[f"lidar_scale{s}_voxels"] = len(lidar[s])

        with report.stage("densify") as out:
            try:
                dense = densify(MultiScaleFeatures({s: lidar[s] for s in (4, 8, 16)}),
                                cfg.densify.broadcast, cfg.seeds.root)
            except EmptyInput:
                dense = SparseVoxelGrid.empty(geom4, C)
            out["grid"] = dense

        with report.stage("fuse") as out:
            queries = guide_queries(dense, cfg.seeds.queries, cfg.attention.query_std)
            fm = fuse(queries, rig, maps, self.attention, stats)
            out["grid"] = fm

        with report.stage("refine") as out:
            if len(fm) == 0:
                fe = fm
                R = ImportanceMap(SparseVoxelGrid.empty(geom4, 1))
                sets = RefinementSets(np.zeros((0, 3), np.int64), np.zeros((0, 3), np.int64),
                                      cfg.refine.tau1, cfg.refine.tau2)
                stats.update(semi_fine=0, fine=0, residual_identity=True)
            else:
                scorer = None
                if cfg.refine.oracle_scorer and gt is not None:
                    scorer = occupancy_fraction_scorer(non_empty_mask(gt))
                fe, R, sets = self.refiner(fm, lidar, rig, maps, scorer, stats)
            out["grid"] = fe
        report.notes["semi_fine"] = len(sets.semi_fine)
        report.notes["fine"] = len(sets.fine)
        report.notes["fe_equals_fm"] = fe.equals(fm)

        with report.stage("head") as out:
            sem4, occ4 = self.head(fe)
            o4 = fe.with_features(assemble_output(sem4, occ4, self.n_classes))
            out["grid"] = o4

        with report.stage("decoder") as out:
            keep = decoder_input_mask(o4.features, self.n_classes)
            o1 = self.decoder(_subset(fe, keep), o4.features[keep], self.geometry)
            out["grid"] = o1
        report.notes["decoder_parents"] = int(np.count_nonzero(keep))

        result = ForwardResult(lidar, fm, fe, R, sets, o4, o1, report, stats=stats)
        if gt is not None:
            with report.stage("losses") as out:
                result.losses = self._losses(result, sem4, occ4, gt, gt_occlusion)
                sem1, _ = result.label_volumes(1)
                result.metrics = compute_metrics(sem1, gt, n_classes=self.n_classes)
                out["voxels"] = len(o4)
        return result

    def _losses(self, result: ForwardResult, sem4: np.ndarray, occ4: np.ndarray,
                gt: np.ndarray, gt_occlusion: Optional[np.ndarray]) -> LossReport:
        # Scale-4 terms against coarsened labels, read at F_E^4's voxels
        gt4 = coarsen_semantic(gt, 4)
        c = result.o4.coords
        sem_labels = gt4[c[:, 0], c[:, 1], c[:, 2]]
        if gt_occlusion is not None:
            occ4_gt = coarsen_occlusion(gt_occlusion, 4)
            occ_labels = occ4_gt[c[:, 0], c[:, 1], c[:, 2]]
        else:
            occ_labels = np.full(len(c), IGNORE_LABEL)
        rc = result.importance.coords
        targets = non_empty_mask(gt4)[rc[:, 0], rc[:, 1], rc[:, 2]].astype(np.float64)
        return compute_losses(sem4, occ4, sem_labels, occ_labels, result.importance,
                              targets, vars(self.config.losses))
