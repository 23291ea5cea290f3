# Occlusion-aware labels for the wall scene: LiDAR and camera ray casting,
# the combined labels, and one slice of the result
from voxrefine.generation.classes import load_class_table
from voxrefine.generation.scene import wall_scene
from voxrefine.occlusion.labels import (OcclusionLabel, build_occlusion_volume,
                                        label_camera, label_lidar)
from voxrefine.viz.volume_slice import plot_label_slice

import matplotlib.pyplot as plt
import numpy as np


def main():
    scene = wall_scene()
    pc = scene.lidar_scan()
    rig = scene.rig()
    print(f"{len(pc)} LiDAR returns, {len(rig)} cameras")

    # Per modality first
    lidar = label_lidar(pc, scene.gt, scene.geometry)
    camera = label_camera(rig, scene.gt, scene.geometry, stride=2)
    for name, labels in (("lidar", lidar), ("camera", camera)):
        counts = np.bincount(labels.ravel(), minlength=3)
        print(name, {label.name.lower(): int(counts[label]) for label in OcclusionLabel})

    vol = build_occlusion_volume(pc, rig, scene.gt, scene.geometry, stride=2)
    print("combined", vol.histogram())

    # Slice through the ground layer, behind the wall is occluded
    extent = (scene.geometry.origin[1], scene.geometry.origin[1] + scene.geometry.extent()[1],
              scene.geometry.origin[0], scene.geometry.origin[0] + scene.geometry.extent()[0])
    fig, axes = plot_label_slice(vol.semantic, vol.occlusion, 1,
                                 load_class_table("nuscenes-occ"), extent)

    plt.show()


if __name__ == "__main__":
    main()
