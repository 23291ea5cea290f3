# Occlusion-aware label generation over synthetic scenes and SemanticKITTI
# sequences, one frame per job
import logging
from joblib import Parallel, delayed
from pathlib import Path
from typing import Dict, List, Optional

from voxrefine.generation.classes import load_class_table
from voxrefine.generation.scene import scene_by_name
from voxrefine.io.kitti import list_frames, load_frame
from voxrefine.io.volumes import write_volume
from voxrefine.lidar.pointcloud import PointCloud
from voxrefine.occlusion.labels import OcclusionLabel, OcclusionVolume, build_occlusion_volume
from voxrefine.voxel.grid import GridGeometry

logger = logging.getLogger(__name__)


def write_occlusion_volume(vol: OcclusionVolume, out_dir, stem: str,
                           seed: Optional[int] = None) -> Dict[str, str]:
    out_dir = Path(out_dir)
    paths = {"occlusion": out_dir / f"{stem}.occlusion",
             "semantic": out_dir / f"{stem}.semantic"}
    write_volume(paths["occlusion"], vol.occlusion, vol.geometry, "occlusion", seed)
    write_volume(paths["semantic"], vol.semantic, vol.geometry, "semantic", seed)
    return {k: str(v) for k, v in paths.items()}


def label_synthetic(name: str, out_dir, stride=4, margin: Optional[float] = None) -> Dict:
    scene = scene_by_name(name)
    vol = build_occlusion_volume(scene.lidar_scan(), scene.rig(), scene.gt,
                                 scene.geometry, stride, margin)
    paths = write_occlusion_volume(vol, out_dir, scene.name, scene.seed)
    return {"frame": scene.name, "dims": list(vol.geometry.dims),
            "histogram": vol.histogram(), "files": paths}


def label_kitti_frame(root, sequence: str, frame: str, out_dir, stride=4,
                      margin: Optional[float] = None, point_stride=1) -> Dict:
    classes = load_class_table("semantickitti")
    geom = GridGeometry.from_preset("semantickitti")
    pc, labels, camera = load_frame(root, sequence, frame, classes)
    if point_stride > 1:
        pc = PointCloud(pc.points[::point_stride], pc.sensor_origin)
    vol = build_occlusion_volume(pc, [camera], labels, geom, stride, margin)
    paths = write_occlusion_volume(vol, Path(out_dir) / sequence, frame)
    logger.info("labelled %s/%s", sequence, frame)
    return {"frame": f"{sequence}/{frame}", "dims": list(geom.dims),
            "histogram": vol.histogram(), "files": paths}


def summarize(dataset: str, frames: List[Dict], stride: int) -> Dict:
    total = {label.name.lower(): 0 for label in OcclusionLabel}
    for f in frames:
        for k, v in f["histogram"].items():
            total[k] += v
    return {"dataset": dataset, "stride": stride, "frames": frames, "histogram": total}


def label_dataset(dataset: str, sequence: str, out_dir, stride=4, margin: Optional[float] = None,
                  workers=1, root=None, point_stride=1, frames: Optional[List[str]] = None) -> Dict:
    # dataset "synthetic" takes comma-separated scene names as the sequence
    if dataset == "synthetic":
        jobs = [delayed(label_synthetic)(name, out_dir, stride, margin)
                for name in sequence.split(",")]
    else:
        frames = frames or list_frames(root, sequence)
        jobs = [delayed(label_kitti_frame)(root, sequence, f, out_dir, stride, margin, point_stride)
                for f in frames]
    results = Parallel(n_jobs=workers)(jobs)
    return summarize(dataset, list(results), stride)
