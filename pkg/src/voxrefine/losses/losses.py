# Training objectives evaluated forward-only: cross-entropy, Lovasz-Softmax,
# the geometry / semantic scene-class affinity terms, the importance BCE and
# the occlusion cross-entropy
import logging
import numpy as np
from dataclasses import dataclass, field
from scipy.special import softmax
from typing import Dict, List, Optional

from voxrefine.errors import NoLabels, ShapeError

logger = logging.getLogger(__name__)

EPS = 1e-12
IGNORE_LABEL = 255
LOSS_TERMS = ("ce", "lovasz", "geo_scal", "sem_scal", "rie_bce", "occlusion_ce")


def _labeled(probs: np.ndarray, labels: np.ndarray, ignore_label=IGNORE_LABEL):
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    if probs.ndim != 2 or probs.shape[0] != labels.shape[0]:
        raise ShapeError(f"probs {probs.shape} do not match {labels.shape[0]} labels")
    keep = labels != ignore_label
    probs, labels = probs[keep], labels[keep].astype(np.int64)
    if len(labels) and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ShapeError(f"labels outside [0, {probs.shape[1]})")
    if len(probs) and np.max(np.abs(probs.sum(axis=1) - 1.0)) > 1e-6:
        raise ValueError("per-voxel distributions must sum to 1")
    return probs, labels


def _clamped_log(x, name: str, flags: Optional[List[str]]):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < EPS):
        logger.warning("%s: probability below %g clamped", name, EPS)
        if flags is not None and name not in flags:
            flags.append(name)
    return np.log(np.clip(x, EPS, None))


def cross_entropy(probs, labels, ignore_label=IGNORE_LABEL,
                  flags: Optional[List[str]] = None) -> float:
    # Mean -log p(true class) over labeled voxels
    probs, labels = _labeled(probs, labels, ignore_label)
    if not len(labels):
        return 0.0
    p_true = probs[np.arange(len(labels)), labels]
    return float(-np.mean(_clamped_log(p_true, "ce_clamped", flags)))


def cross_entropy_grad(logits, labels) -> np.ndarray:
    # d cross_entropy(softmax(logits)) / d logits, every voxel labeled
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    grad = softmax(logits, axis=1)
    grad[np.arange(len(labels)), labels] -= 1.0
    return grad / len(labels)


def lovasz_grad(fg_sorted: np.ndarray) -> np.ndarray:
    # Increments of the Jaccard loss along errors sorted in decreasing order
    fg_sorted = np.asarray(fg_sorted, dtype=np.float64)
    gts = fg_sorted.sum()
    intersection = gts - np.cumsum(fg_sorted)
    union = gts + np.cumsum(1.0 - fg_sorted)
    jaccard = 1.0 - intersection / union
    jaccard[1:] = jaccard[1:] - jaccard[:-1]
    return jaccard


def lovasz_softmax(probs, labels, ignore_label=IGNORE_LABEL) -> float:
    # Mean over classes present in the labels of the Lovasz extension of the
    # Jaccard loss, applied to |onehot - p| sorted in decreasing order
    probs, labels = _labeled(probs, labels, ignore_label)
    if not len(labels):
        raise NoLabels("Lovasz-Softmax needs at least one labeled voxel")
    losses = []
    for c in np.unique(labels):
        fg = (labels == c).astype(np.float64)
        errors = np.abs(fg - probs[:, c])
        order = np.argsort(-errors, kind="stable")
        losses.append(float(np.dot(errors[order], lovasz_grad(fg[order]))))
    return float(np.mean(losses))


def _neg_log_terms(terms: Dict[str, float], prefix: str, flags: Optional[List[str]]) -> float:
    return float(sum(-_clamped_log(v, f"{prefix}_{k}_clamped", flags) for k, v in terms.items()))


def geo_scal(probs, labels, empty_class=0, ignore_label=IGNORE_LABEL,
             flags: Optional[List[str]] = None) -> float:
    # -log precision - log recall - log specificity of the soft occupied mass
    probs, labels = _labeled(probs, labels, ignore_label)
    if not len(labels):
        return 0.0
    empty_p = probs[:, empty_class]
    occupied_p = 1.0 - empty_p
    target = (labels != empty_class).astype(np.float64)
    intersection = np.sum(occupied_p * target)
    terms = {}
    if target.sum() > 0:
        mass = occupied_p.sum()
        terms["precision"] = intersection / mass if mass > 0 else 0.0
        terms["recall"] = intersection / target.sum()
    if (1.0 - target).sum() > 0:
        terms["specificity"] = np.sum(empty_p * (1.0 - target)) / (1.0 - target).sum()
    return _neg_log_terms(terms, "geo_scal", flags)


def sem_scal(probs, labels, ignore_label=IGNORE_LABEL,
             flags: Optional[List[str]] = None) -> float:
    # The same three terms per class, averaged over classes that appear in
    # the labels or carry predicted mass. A class absent from the labels
    # contributes only its specificity term.
    probs, labels = _labeled(probs, labels, ignore_label)
    if not len(labels):
        return 0.0
    total, count = 0.0, 0
    for c in range(probs.shape[1]):
        p = probs[:, c]
        target = (labels == c).astype(np.float64)
        if target.sum() == 0 and p.sum() == 0:
            continue
        count += 1
        terms = {}
        if target.sum() > 0:
            nominator = np.sum(p * target)
            if p.sum() > 0:
                terms["precision"] = nominator / p.sum()
            terms["recall"] = nominator / target.sum()
        if (1.0 - target).sum() > 0:
            terms["specificity"] = np.sum((1.0 - p) * (1.0 - target)) / (1.0 - target).sum()
        total += _neg_log_terms(terms, "sem_scal", flags)
    return total / count if count else 0.0


def rie_bce(scores, targets, flags: Optional[List[str]] = None) -> float:
    # Mean binary cross-entropy between importance scores and 0/1 targets
    s = np.asarray(getattr(scores, "scores", scores), dtype=np.float64).reshape(-1)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if s.shape != y.shape:
        raise ShapeError(f"{len(s)} scores for {len(y)} targets")
    if not len(s):
        return 0.0
    # A 0/1 target only ever reads one of the two logs
    pos = _clamped_log(s[y > 0], "rie_bce_clamped", flags)
    neg = _clamped_log(1.0 - s[y < 1], "rie_bce_clamped", flags)
    return float(-(np.sum(y[y > 0] * pos) + np.sum((1.0 - y[y < 1]) * neg)) / len(s))


def rie_bce_grad(scores, targets) -> np.ndarray:
    # d rie_bce / d scores, for scores strictly inside (0, 1)
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    return (s - y) / (s * (1.0 - s) * len(s))


def occlusion_ce(probs, labels, ignore_label=IGNORE_LABEL,
                 flags: Optional[List[str]] = None) -> float:
    # Cross-entropy over {Empty, NonOccluded, Occluded}
    if np.asarray(probs).shape[-1] != 3:
        raise ShapeError("occlusion probabilities have 3 channels")
    return cross_entropy(probs, labels, ignore_label, flags)


@dataclass
class LossReport:
    ce: float = 0.0
    lovasz: float = 0.0
    geo_scal: float = 0.0
    sem_scal: float = 0.0
    rie_bce: float = 0.0
    occlusion_ce: float = 0.0
    weights: Dict[str, float] = field(default_factory=lambda: {k: 1.0 for k in LOSS_TERMS})
    flags: List[str] = field(default_factory=list)

    @property
    def total(self) -> float:
        return float(sum(self.weights.get(k, 1.0) * getattr(self, k) for k in LOSS_TERMS))

    def to_dict(self) -> Dict:
        d = {k: getattr(self, k) for k in LOSS_TERMS}
        d["total"] = self.total
        d["weights"] = {k: self.weights.get(k, 1.0) for k in LOSS_TERMS}
        d["flags"] = list(self.flags)
        return d


def compute_losses(sem_probs, occ_probs, sem_labels, occ_labels, scores, score_targets,
                   weights: Optional[Dict[str, float]] = None, empty_class=0,
                   ignore_label=IGNORE_LABEL) -> LossReport:
    # All six terms on one set of scale-4 voxels; ignored voxels leave every
    # term but the importance BCE
    report = LossReport()
    if weights:
        report.weights.update(weights)
    flags = report.flags
    sem_labels = np.asarray(sem_labels).reshape(-1)
    occ_labels = np.where(sem_labels == ignore_label, ignore_label,
                          np.asarray(occ_labels).reshape(-1))
    report.ce = cross_entropy(sem_probs, sem_labels, ignore_label, flags)
    try:
        report.lovasz = lovasz_softmax(sem_probs, sem_labels, ignore_label)
    except NoLabels:
        logger.warning("no labeled voxels: Lovasz term set to 0")
        flags.append("lovasz_no_labels")
    report.geo_scal = geo_scal(sem_probs, sem_labels, empty_class, ignore_label, flags)
    report.sem_scal = sem_scal(sem_probs, sem_labels, ignore_label, flags)
    report.rie_bce = rie_bce(scores, score_targets, flags)
    report.occlusion_ce = occlusion_ce(occ_probs, occ_labels, ignore_label, flags)
    return report
