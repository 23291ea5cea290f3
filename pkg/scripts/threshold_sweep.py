# Refinement thresholds vs. how much of the scene each level covers and how
# much of it is foreground, using the occupancy-fraction oracle as scorer
from voxrefine.config import PipelineConfig
from voxrefine.generation.scene import random_scene
from voxrefine.occlusion.labels import non_empty_mask
from voxrefine.pipeline import Pipeline
from voxrefine.refine.hvfr import foreground_fractions, occupancy_fraction_scorer

import numpy as np

# (tau1, tau2) pairs of the threshold ablation
SWEEP = [(0.7, 0.4), (0.5, 0.7), (0.4, 0.8), (0.4, 0.6), (0.4, 0.7), (0.3, 0.7)]
N_SCENES = 5


def main():
    scenes = [random_scene(seed) for seed in range(N_SCENES)]
    frames = []
    for scene in scenes:
        rig = scene.rig()
        frames.append((scene, scene.lidar_scan(), rig, scene.render(rig, 16)))

    print("tau1,tau2,semi_fine,fine,refine_s,fg_coarse,fg_semi_fine,fg_fine,miou")
    for tau1, tau2 in SWEEP:
        config = PipelineConfig()
        config.refine.tau1, config.refine.tau2 = tau1, tau2
        config.refine.oracle_scorer = True
        rows = []
        for scene, pc, rig, maps in frames:
            result = Pipeline(config, scene.geometry, scene.n_classes).run(pc, rig, maps, scene.gt)
            fg = foreground_fractions(result.importance, result.sets,
                                      occupancy_fraction_scorer(non_empty_mask(scene.gt)))
            rows.append([len(result.sets.semi_fine), len(result.sets.fine),
                         result.report.seconds("refine"), fg["coarse"], fg["semi_fine"],
                         fg["fine"], result.metrics.miou])
        mean = np.nanmean(np.array(rows, dtype=np.float64), axis=0)
        print(f"{tau1},{tau2}," + ",".join(f"{m:.4f}" for m in mean))


if __name__ == "__main__":
    main()
