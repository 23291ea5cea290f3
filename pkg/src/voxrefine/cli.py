# Command-line entry point: label-gen, eval, forward, bench
import argparse
import logging
import sys
import numpy as np
from pathlib import Path
from typing import List, Optional

from voxrefine.bench import run_bench, write_csv
from voxrefine.config import DEFAULT_CONFIG, PipelineConfig
from voxrefine.errors import ConfigError, DimensionMismatch, VoxRefineError
from voxrefine.fusion.camera import FeatureMap2D
from voxrefine.generation.classes import load_class_table
from voxrefine.generation.scene import scene_by_name
from voxrefine.io.kitti import camera_from_calib, read_calib, read_velodyne
from voxrefine.io.nuscenes import read_occupancy_npy
from voxrefine.io.reports import dumps, write_report
from voxrefine.io.rig import load_rig
from voxrefine.io.volumes import read_volume, write_volume
from voxrefine.labelgen import label_dataset
from voxrefine.lidar.pointcloud import PointCloud
from voxrefine.losses.metrics import compute_metrics
from voxrefine.occlusion.labels import build_occlusion_volume
from voxrefine.pipeline import Pipeline

logger = logging.getLogger("voxrefine")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voxrefine",
                                     description="Sparse multi-resolution voxel occupancy toolkit")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("label-gen", help="occlusion-aware ground truth by ray casting")
    p.add_argument("--dataset", required=True,
                   help="'synthetic', or a SemanticKITTI root (relative names resolve "
                        "under $VOXREFINE_DATA_ROOT)")
    p.add_argument("--sequence", required=True,
                   help="sequence id, or comma-separated scene names for 'synthetic'")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--stride", type=int, default=4, help="camera ray stride in pixels")
    p.add_argument("--margin", type=float, default=None,
                   help="meters cast past each LiDAR point (default: grid diagonal)")
    p.add_argument("--frames", default=None, help="comma-separated frame ids (default: all)")
    p.add_argument("--point-stride", type=int, default=1, help="use every n-th LiDAR point")
    p.add_argument("--workers", type=int, default=1, help="frames labelled in parallel")
    p.add_argument("--config", type=Path, default=DEFAULT_CONFIG)

    p = sub.add_parser("eval", help="IoU / mIoU of a predicted volume against ground truth")
    p.add_argument("--pred", required=True, type=Path)
    p.add_argument("--gt", required=True, type=Path,
                   help="volume file, or a nuScenes-Occupancy .npy annotation")
    p.add_argument("--classes", default="nuscenes-occ", help="class table in res/")
    p.add_argument("--out", type=Path, default=None, help="JSON report (default: stdout)")

    p = sub.add_parser("forward", help="run the full forward pass on one frame")
    p.add_argument("--config", type=Path, default=DEFAULT_CONFIG)
    p.add_argument("--scene", default="street",
                   help="synthetic scene: empty, wall, street or random:<seed>")
    p.add_argument("--velodyne", type=Path, nargs="+", default=None,
                   help="KITTI sweeps, already in one frame, to run instead of a synthetic scene")
    p.add_argument("--calib", type=Path, default=None, help="KITTI calib.txt for --velodyne")
    p.add_argument("--rig", type=Path, default=None,
                   help="camera rig JSON replacing the scene ring or the KITTI camera")
    p.add_argument("--seed", type=int, default=None, help="overrides seeds.root")
    p.add_argument("--tau1", type=float, default=None)
    p.add_argument("--tau2", type=float, default=None)
    p.add_argument("--out", type=Path, default=None, help="directory for volumes and report")

    p = sub.add_parser("bench", help="stage timings against grid size")
    p.add_argument("--config", type=Path, default=DEFAULT_CONFIG)
    p.add_argument("--sizes", default="1,2", help="comma-separated per-axis grid multipliers")
    p.add_argument("--repeats", type=int, default=1, help="forward passes per size, fastest kept")
    p.add_argument("--out", type=Path, default=None, help="CSV file (default: stdout)")
    return parser


def _configure_logging(args) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def cmd_label_gen(args) -> int:
    config = PipelineConfig.load(args.config)
    frames = args.frames.split(",") if args.frames else None
    if args.dataset == "synthetic":
        try:
            summary = label_dataset("synthetic", args.sequence, args.out, args.stride,
                                    args.margin, args.workers)
        except KeyError as e:
            raise ConfigError(str(e))
    else:
        root = config.dataset_root(args.dataset)
        summary = label_dataset("semantickitti", args.sequence, args.out, args.stride,
                                args.margin, args.workers, root, args.point_stride, frames)
    write_report(args.out / "summary.json", summary)
    print(dumps(summary["histogram"]))
    return 0


def cmd_eval(args) -> int:
    pred, _, _ = read_volume(args.pred)
    if args.gt.suffix == ".npy":
        gt = read_occupancy_npy(args.gt, dims=pred.shape)
    else:
        gt, _, _ = read_volume(args.gt)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    table = load_class_table(args.classes)
    metrics = compute_metrics(pred, gt, n_classes=len(table), empty_class=table.empty,
                              ignore_label=table.ignore)
    report = metrics.to_dict(table.names)
    if args.out:
        write_report(args.out, report)
    else:
        print(dumps(report))
    return 0


def _load_frame(args, config: PipelineConfig):
    # (pc, rig, maps, gt, geometry, n_classes)
    if args.velodyne is not None:
        if args.calib is None and args.rig is None:
            raise ConfigError("--velodyne needs --calib or --rig")
        pc = PointCloud.concatenate([read_velodyne(p) for p in args.velodyne])
        if args.rig is not None:
            rig = load_rig(args.rig)
        else:
            rig = [camera_from_calib(read_calib(args.calib))]
        logger.warning("no images for a KITTI sweep: camera features are zero")
        maps = FeatureMap2D.constant(rig, np.zeros(config.channels.image))
        preset = config.geometry.preset
        table = load_class_table(preset if preset == "semantickitti" else "nuscenes-occ")
        return pc, rig, maps, None, config.geometry.build(), len(table)
    try:
        scene = scene_by_name(args.scene)
    except (KeyError, ValueError) as e:
        raise ConfigError(f"bad --scene: {e}")
    rig = load_rig(args.rig) if args.rig is not None else scene.rig()
    return (scene.lidar_scan(), rig, scene.render(rig, config.channels.image), scene.gt,
            scene.geometry, scene.n_classes)


def cmd_forward(args) -> int:
    config = PipelineConfig.load(args.config)
    if args.seed is not None:
        config.seeds.root = args.seed
    if args.tau1 is not None:
        config.refine.tau1 = args.tau1
    if args.tau2 is not None:
        config.refine.tau2 = args.tau2
    config.validate()

    pc, rig, maps, gt, geom, n_classes = _load_frame(args, config)
    gt_occlusion = None
    if gt is not None:
        gt_occlusion = build_occlusion_volume(pc, rig, gt, geom, config.occlusion.camera_stride,
                                              config.occlusion.margin).occlusion
    pipeline = Pipeline(config, geom, n_classes)
    result = pipeline.run(pc, rig, maps, gt, gt_occlusion)

    print(result.report)
    print(f"O4 {len(result.o4)}x{result.o4.channels} at scale 4")
    print(f"O1 {len(result.o1)}x{result.o1.channels} at scale 1")
    report = {"seed": config.seeds.root, "tau1": config.refine.tau1,
              "tau2": config.refine.tau2, **result.report.to_dict(),
              "shapes": {"o4": [len(result.o4), result.o4.channels],
                         "o1": [len(result.o1), result.o1.channels]},
              "stats": result.stats}
    if result.losses is not None:
        report["losses"] = result.losses.to_dict()
        report["metrics"] = result.metrics.to_dict()
        report["gt_self_eval"] = compute_metrics(gt, gt, n_classes=n_classes).to_dict()

    if args.out:
        for scale in (4, 1):
            sem, occ = result.label_volumes(scale)
            g = geom.at_scale(scale)
            write_volume(args.out / f"pred{scale}.semantic", sem, g, "semantic", config.seeds.root)
            write_volume(args.out / f"pred{scale}.occlusion", occ, g, "occlusion",
                         config.seeds.root)
        if gt is not None:
            write_volume(args.out / "gt.semantic", gt, geom, "semantic", config.seeds.root)
        write_report(args.out / "forward.json", report)
    return 0


def cmd_bench(args) -> int:
    config = PipelineConfig.load(args.config)
    try:
        sizes = [int(s) for s in args.sizes.split(",")]
    except ValueError:
        raise ConfigError(f"--sizes takes integers, got '{args.sizes}'")
    rows = run_bench(config, sizes, args.repeats)
    if args.out:
        with open(args.out, "w") as f:
            write_csv(rows, f)
    else:
        write_csv(rows, sys.stdout)
    return 0


COMMANDS = {"label-gen": cmd_label_gen, "eval": cmd_eval, "forward": cmd_forward,
            "bench": cmd_bench}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        return COMMANDS[args.command](args)
    except VoxRefineError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
