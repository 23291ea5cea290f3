# Scene-completion metrics: geometric IoU over the occupied masks and
# per-class IoU / mIoU over the semantic labels
import numpy as np
from dataclasses import dataclass
from typing import Dict, List, Optional

from voxrefine.errors import DimensionMismatch

IGNORE_LABEL = 255


@dataclass
class MetricsReport:
    iou: float
    precision: float
    recall: float
    per_class_iou: List[float]  # classes 1..n-1, NaN where the union is empty
    miou: float
    n_classes: int

    def to_dict(self, class_names: Optional[List[str]] = None) -> Dict:
        def clean(x: float):
            return None if np.isnan(x) else float(x)

        names = class_names[1:] if class_names else [str(c) for c in range(1, self.n_classes)]
        return {"iou": clean(self.iou),
                "precision": clean(self.precision),
                "recall": clean(self.recall),
                "miou": clean(self.miou),
                "n_classes": self.n_classes,
                "per_class_iou": {n: clean(v) for n, v in zip(names, self.per_class_iou)}}


def _ratio(num: int, den: int, empty_value: float) -> float:
    return num / den if den else empty_value


def compute_metrics(pred, gt, ignore_mask=None, n_classes=18, empty_class=0,
                    ignore_label=IGNORE_LABEL) -> MetricsReport:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    valid = gt != ignore_label
    if ignore_mask is not None:
        ignore_mask = np.asarray(ignore_mask, dtype=bool)
        if ignore_mask.shape != gt.shape:
            raise DimensionMismatch(f"ignore mask {ignore_mask.shape} vs {gt.shape}")
        valid &= ~ignore_mask
    p, g = pred[valid], gt[valid]

    p_occ = (p != empty_class) & (p != ignore_label)
    g_occ = g != empty_class
    inter = int(np.count_nonzero(p_occ & g_occ))
    union = int(np.count_nonzero(p_occ | g_occ))
    # Two empty volumes agree perfectly
    iou = _ratio(inter, union, 1.0)
    precision = _ratio(inter, int(np.count_nonzero(p_occ)), float("nan"))
    recall = _ratio(inter, int(np.count_nonzero(g_occ)), float("nan"))

    per_class = []
    for c in range(n_classes):
        if c == empty_class:
            continue
        ci = int(np.count_nonzero((p == c) & (g == c)))
        cu = int(np.count_nonzero((p == c) | (g == c)))
        per_class.append(_ratio(ci, cu, float("nan")))
    defined = [v for v in per_class if not np.isnan(v)]
    miou = float(np.mean(defined)) if defined else float("nan")
    return MetricsReport(iou, precision, recall, per_class, miou, n_classes)
