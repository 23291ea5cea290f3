import matplotlib.colors as colors
import matplotlib as mpl
import numpy as np

from voxrefine.generation.classes import ClassTable


def tabcmapper(i: int, cmap=mpl.colormaps["tab20"], mod=19):
    # Returns the i mod-(n-1)th color from cmap, only use with qualitative
    # color maps
    return colors.rgb2hex(cmap(i % mod), keep_alpha=True)


def class_colors(table: ClassTable) -> list:
    # One hex colour per class id, falling back to tab20 where res/ has none
    return [c.color or tabcmapper(c.id) for c in table.classes]


def class_cmap(table: ClassTable, ignore_color="#808080"):
    # Listed colormap indexed by class id; the ignore label gets its own slot
    # at index len(table)
    cmap = colors.ListedColormap(class_colors(table) + [ignore_color])
    norm = colors.BoundaryNorm(np.arange(len(table) + 2) - 0.5, cmap.N)
    return cmap, norm


OCCLUSION_COLORS = ["#ffffff", "#2ca02c", "#d62728"]  # empty, non-occluded, occluded
