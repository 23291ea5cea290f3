import itertools
import math

import numpy as np
import pytest
from scipy.special import softmax

from voxrefine.errors import NoLabels, ShapeError
from voxrefine.losses.losses import (EPS, IGNORE_LABEL, LOSS_TERMS, LossReport, compute_losses,
                                     cross_entropy, cross_entropy_grad, geo_scal, lovasz_softmax,
                                     occlusion_ce, rie_bce, rie_bce_grad, sem_scal)


def one_hot(labels, n):
    out = np.zeros((len(labels), n))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def jaccard_loss(errors, fg):
    # |A| / |fg u A| for the error set A
    return len(errors) / len(fg | errors) if errors else 0.0


def lovasz_oracle(probs, labels):
    # Lovasz extension of the Jaccard loss straight from its definition:
    # sort errors, weight each by the marginal loss of adding its voxel
    losses = []
    for c in sorted(set(labels.tolist())):
        fg = {i for i, y in enumerate(labels) if y == c}
        m = [abs((1.0 if i in fg else 0.0) - probs[i, c]) for i in range(len(labels))]
        order = sorted(range(len(m)), key=lambda i: -m[i])
        total, prefix = 0.0, set()
        for i in order:
            before = jaccard_loss(prefix, fg)
            prefix.add(i)
            total += m[i] * (jaccard_loss(prefix, fg) - before)
        losses.append(total)
    return sum(losses) / len(losses)


def lattice_rows(n_classes):
    # Distributions over n_classes with every entry in {0, 1/4, ..., 1}
    steps = [q / 4 for q in range(5)]
    return [row for row in itertools.product(steps, repeat=n_classes) if sum(row) == 1.0]


def lattice_cases(n_voxels, n_classes, draws=None, seed=0):
    # Every label assignment; every probability assignment, or `draws` seeded
    # picks of it when that would be too many
    rows = lattice_rows(n_classes)
    if draws is None:
        prob_sets = itertools.product(rows, repeat=n_voxels)
    else:
        rng = np.random.default_rng(seed)
        prob_sets = [[rows[i] for i in rng.integers(0, len(rows), n_voxels)] for _ in range(draws)]
    prob_sets = [np.array(p) for p in prob_sets]
    for labels in itertools.product(range(n_classes), repeat=n_voxels):
        for probs in prob_sets:
            yield probs, np.array(labels)


def numeric_grad(f, x, h=1e-6):
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += h
        down[idx] -= h
        grad[idx] = (f(up) - f(down)) / (2 * h)
    return grad


class TestReferenceValues:
    def test_uniform_ce_is_ln18(self):
        labels = np.array([0, 3, 17, 5])
        assert cross_entropy(np.full((4, 18), 1.0 / 18), labels) == pytest.approx(math.log(18))

    def test_uniform_occlusion_ce_is_ln3(self):
        assert occlusion_ce(np.full((5, 3), 1.0 / 3), np.array([0, 1, 2, 2, 1])) == \
            pytest.approx(math.log(3))

    def test_half_scores_bce_is_ln2(self):
        assert rie_bce(np.full(6, 0.5), np.array([0, 1, 1, 0, 0, 1])) == pytest.approx(math.log(2))

    def test_perfect_prediction_is_zero(self):
        labels = np.array([0, 0, 5, 7, 5, 12])
        probs = one_hot(labels, 18)
        report = compute_losses(probs, one_hot(np.array([0, 0, 1, 2, 1, 1]), 3), labels,
                                np.array([0, 0, 1, 2, 1, 1]), np.array([0.0, 1.0]),
                                np.array([0.0, 1.0]))
        assert report.total == pytest.approx(0.0, abs=1e-12)
        assert report.flags == []

    def test_geo_scal_hand_value(self):
        probs = np.zeros((2, 18))
        probs[0, [0, 5]] = [0.8, 0.2]
        probs[1, [0, 5]] = [0.4, 0.6]
        expected = -math.log(0.75) - math.log(0.6) - math.log(0.8)
        assert geo_scal(probs, np.array([0, 5])) == pytest.approx(expected)

    def test_sem_scal_absent_class_specificity_only(self):
        probs = np.array([[0.5, 0.5], [0.5, 0.5]])
        labels = np.array([0, 0])
        # class 0: precision 1, recall 0.5, specificity undefined;
        # class 1 (absent): specificity 0.5
        expected = (-math.log(0.5) - math.log(0.5)) / 2
        assert sem_scal(probs, labels) == pytest.approx(expected)


class TestLovasz:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_definition(self, seed):
        rng = np.random.default_rng(seed)
        probs = softmax(rng.normal(size=(12, 4)), axis=1)
        labels = rng.integers(0, 4, size=12)
        assert abs(lovasz_softmax(probs, labels) - lovasz_oracle(probs, labels)) < 1e-9

    @pytest.mark.parametrize("n_voxels,n_classes,draws", [
        (1, 2, None), (2, 2, None), (3, 2, None),
        (1, 3, None), (2, 3, None),
        (4, 3, 4), (5, 3, 3), (6, 3, 2),
    ])
    def test_lattice_matches_definition(self, n_voxels, n_classes, draws):
        worst = max(abs(lovasz_softmax(p, y) - lovasz_oracle(p, y))
                    for p, y in lattice_cases(n_voxels, n_classes, draws, seed=n_voxels))
        assert worst < 1e-9

    def test_all_wrong_one_hot_is_one(self):
        labels = np.array([0, 1, 2, 2])
        assert lovasz_softmax(one_hot(np.array([1, 2, 0, 0]), 3), labels) == pytest.approx(1.0)
        assert lovasz_softmax(one_hot(labels, 3), labels) == 0.0

    def test_ignored_voxels_dropped(self):
        probs = softmax(np.random.default_rng(9).normal(size=(6, 3)), axis=1)
        labels = np.array([0, 1, IGNORE_LABEL, 2, IGNORE_LABEL, 1])
        keep = labels != IGNORE_LABEL
        assert lovasz_softmax(probs, labels) == pytest.approx(
            lovasz_oracle(probs[keep], labels[keep]), abs=1e-9)

    def test_no_labels(self):
        with pytest.raises(NoLabels):
            lovasz_softmax(np.full((2, 3), 1.0 / 3), np.array([IGNORE_LABEL, IGNORE_LABEL]))


class TestGradients:
    def test_cross_entropy(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(5, 6))
        labels = rng.integers(0, 6, size=5)
        numeric = numeric_grad(lambda z: cross_entropy(softmax(z, axis=1), labels), logits)
        assert np.max(np.abs(numeric - cross_entropy_grad(logits, labels))) < 1e-4

    def test_rie_bce(self):
        rng = np.random.default_rng(1)
        scores = rng.uniform(0.1, 0.9, size=7)
        targets = rng.integers(0, 2, size=7).astype(float)
        numeric = numeric_grad(lambda s: rie_bce(s, targets), scores)
        assert np.max(np.abs(numeric - rie_bce_grad(scores, targets))) < 1e-4


class TestValidation:
    def test_clamped_log_flagged(self):
        flags = []
        probs = np.array([[1.0, 0.0], [0.5, 0.5]])
        loss = cross_entropy(probs, np.array([1, 0]), flags=flags)
        assert loss == pytest.approx((-math.log(EPS) - math.log(0.5)) / 2)
        assert flags == ["ce_clamped"]

    def test_distributions_must_sum_to_one(self):
        with pytest.raises(ValueError):
            cross_entropy(np.array([[0.5, 0.6]]), np.array([0]))

    def test_shapes(self):
        with pytest.raises(ShapeError):
            cross_entropy(np.full((2, 3), 1.0 / 3), np.array([0, 1, 2]))
        with pytest.raises(ShapeError):
            cross_entropy(np.full((1, 3), 1.0 / 3), np.array([3]))
        with pytest.raises(ShapeError):
            occlusion_ce(np.full((1, 4), 0.25), np.array([0]))
        with pytest.raises(ShapeError):
            rie_bce(np.full(3, 0.5), np.zeros(2))

    def test_all_ignored(self):
        probs = np.full((2, 3), 1.0 / 3)
        labels = np.full(2, IGNORE_LABEL)
        assert cross_entropy(probs, labels) == 0.0
        assert geo_scal(probs, labels) == 0.0


class TestReport:
    def test_weights_and_dict(self):
        report = LossReport(ce=1.0, lovasz=2.0, geo_scal=3.0, sem_scal=4.0, rie_bce=5.0,
                            occlusion_ce=6.0)
        assert report.total == pytest.approx(21.0)
        report.weights["sem_scal"] = 0.0
        d = report.to_dict()
        assert d["total"] == pytest.approx(17.0)
        assert list(d)[:len(LOSS_TERMS)] == list(LOSS_TERMS)
        assert d["weights"]["sem_scal"] == 0.0

    def test_no_labels_flagged(self):
        labels = np.full(3, IGNORE_LABEL)
        report = compute_losses(np.full((3, 18), 1.0 / 18), np.full((3, 3), 1.0 / 3), labels,
                                np.zeros(3, dtype=int), np.full(3, 0.5), np.ones(3))
        assert report.lovasz == 0.0
        assert report.occlusion_ce == 0.0
        assert report.rie_bce == pytest.approx(math.log(2))
        assert "lovasz_no_labels" in report.flags
