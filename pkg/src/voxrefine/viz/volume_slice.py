# Viz tools for label volumes: one horizontal slice, semantic next to occlusion
import matplotlib.colors as colors
import matplotlib.pyplot as plt
import numpy as np

from voxrefine.generation.classes import ClassTable
from voxrefine.occlusion.labels import OcclusionLabel
from voxrefine.viz.color_utils import OCCLUSION_COLORS, class_cmap


def plot_label_slice(semantic: np.ndarray, occlusion: np.ndarray, z: int,
                     table: ClassTable, extent=None):
    # Slice at height index z; x runs up the page, y across
    fig, axes = plt.subplots(1, 2, figsize=(10, 5))
    sem = semantic[:, :, z].astype(np.int64)
    sem[sem == table.ignore] = len(table)
    cmap, norm = class_cmap(table)
    axes[0].imshow(sem, cmap=cmap, norm=norm, origin="lower", extent=extent,
                   interpolation="nearest")
    axes[0].set_title(f"semantic, z={z}")

    occ_cmap = colors.ListedColormap(OCCLUSION_COLORS)
    axes[1].imshow(occlusion[:, :, z], cmap=occ_cmap, vmin=0, vmax=2, origin="lower",
                   extent=extent, interpolation="nearest")
    axes[1].set_title(f"occlusion, z={z}")
    handles = [plt.Rectangle((0, 0), 1, 1, color=OCCLUSION_COLORS[label])
               for label in OcclusionLabel]
    axes[1].legend(handles, [label.name.lower() for label in OcclusionLabel],
                   loc="upper right", fontsize="small")
    for ax in axes:
        ax.set_xlabel("y")
        ax.set_ylabel("x")

    return fig, axes
