# Per-stage wall time and peak memory of the forward pass as the grid grows
# around a fixed set of objects
import logging
import tracemalloc
from typing import Dict, List, Sequence

from voxrefine.config import PipelineConfig
from voxrefine.errors import ConfigError
from voxrefine.generation.scene import bench_scene
from voxrefine.pipeline import Pipeline

logger = logging.getLogger(__name__)

CSV_HEADER = "size,dims,stage,seconds,voxels,semi_fine,fine,peak_mb"


class BenchRow:
    def __init__(self, size: int, dims, stage: str, seconds: float, voxels: int,
                 semi_fine: int, fine: int, peak_mb: float) -> None:
        self.size = size
        self.dims = dims
        self.stage = stage
        self.seconds = seconds
        self.voxels = voxels
        self.semi_fine = semi_fine
        self.fine = fine
        self.peak_mb = peak_mb

    def __str__(self) -> str:
        dims = "x".join(str(d) for d in self.dims)
        return (f"{self.size},{dims},{self.stage},{self.seconds:.6f},{self.voxels},"
                f"{self.semi_fine},{self.fine},{self.peak_mb:.3f}")


def run_bench(config: PipelineConfig, sizes: Sequence[int], repeats=1) -> List[BenchRow]:
    # Each stage reports its fastest time over `repeats` forward passes
    if repeats < 1:
        raise ConfigError(f"repeats must be positive, got {repeats}")
    rows = []
    for k in sizes:
        scene = bench_scene(k)
        pipeline = Pipeline(config, scene.geometry, scene.n_classes)
        pc = scene.lidar_scan()
        rig = scene.rig()
        maps = scene.render(rig, config.channels.image)

        best: Dict[str, float] = {}
        peak = 0
        for _ in range(repeats):
            tracemalloc.start()
            result = pipeline.run(pc, rig, maps)
            peak = max(peak, tracemalloc.get_traced_memory()[1])
            tracemalloc.stop()
            for r in result.report.records:
                best[r.name] = min(best.get(r.name, float("inf")), r.seconds)

        for r in result.report.records:
            rows.append(BenchRow(k, scene.geometry.dims, r.name, best[r.name], r.voxels,
                                 len(result.sets.semi_fine), len(result.sets.fine),
                                 peak / 2 ** 20))
        logger.info("bench size %d: refine %.3fs with |S|=%d |F|=%d", k, best["refine"],
                    len(result.sets.semi_fine), len(result.sets.fine))
    return rows


def write_csv(rows: List[BenchRow], out) -> None:
    out.write(CSV_HEADER + "\n")
    for row in rows:
        out.write(str(row) + "\n")
