"""Tests for the contrastive loss, class prior, and prior-adjusted classifier losses.

Derived values are checked against independent brute-force oracles written
directly from the definitions, with no shared code paths.
"""

import math

import numpy as np
import pytest

from ltocl.errors import ConfigError, DataError, DegenerateBatchError, LabelError
from ltocl.losses import (
    ClassPrior,
    LossResult,
    cross_entropy_loss,
    equalization_loss,
    supcon_loss,
)
from ltocl.numeric import ParamTensor, finite_difference_gradient, l2_normalize_rows


def unit_rows(n, d, seed):
    return l2_normalize_rows(np.random.default_rng(seed).standard_normal((n, d)))


def supcon_oracle(z, labels, tau):
    """Literal double loop over anchors and positives. No vectorization.

    Returns 0.0 when no anchor has a positive, matching the library's
    contribute-nothing rule.
    """
    n = len(labels)
    total, contributing = 0.0, 0
    for j in range(n):
        positives = [p for p in range(n) if p != j and labels[p] == labels[j]]
        if not positives:
            continue
        contributing += 1
        denom = sum(math.exp(float(z[j] @ z[k]) / tau) for k in range(n) if k != j)
        inner = 0.0
        for p in positives:
            inner += math.log(math.exp(float(z[j] @ z[p]) / tau) / denom)
        total += -inner / len(positives)
    return total / contributing if contributing else 0.0


def eq_loss_oracle(logits, labels, prior_vec, seen):
    """Direct per-sample evaluation of the prior-shifted softmax loss."""
    total = 0.0
    for row, y in zip(logits, labels):
        adjusted = {k: row[k] + math.log(prior_vec[k]) for k in seen}
        denom = sum(math.exp(v) for v in adjusted.values())
        total += -math.log(math.exp(adjusted[y]) / denom)
    return total / len(labels)


class TestClassPrior:
    def test_fresh_counts_and_prior(self):
        prior = ClassPrior(4)
        prior.update([0, 0, 1])
        assert prior.counts.tolist() == [2, 1, 0, 0]
        assert np.allclose(prior.prior_vector(), [2 / 3, 1 / 3, 0, 0])

    def test_reset_keeps_seen_set(self):
        prior = ClassPrior(4)
        prior.update([0, 1])
        prior.reset_counts()
        assert prior.counts.tolist() == [0, 0, 0, 0]
        assert prior.seen_classes().tolist() == [0, 1]

    def test_smoothing_only_when_a_seen_class_has_zero_count(self):
        prior = ClassPrior(3)
        prior.update([0, 1])
        prior.reset_counts()
        prior.update([0, 0, 0])
        # class 1 seen but absent from scope: add-one smoothing kicks in
        assert np.allclose(prior.prior_vector()[:2], [4 / 5, 1 / 5])

    def test_no_smoothing_when_all_seen_counted(self):
        prior = ClassPrior(3)
        prior.update([0, 0, 0, 1])
        assert np.allclose(prior.prior_vector()[:2], [0.75, 0.25])

    def test_prior_sums_to_one_over_seen(self):
        prior = ClassPrior(6)
        prior.update([5, 5, 2, 0])
        p = prior.prior_vector()
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        assert p[1] == 0.0 and p[3] == 0.0

    def test_out_of_range_label(self):
        prior = ClassPrior(3)
        with pytest.raises(LabelError):
            prior.update([3])

    def test_prior_before_any_update(self):
        with pytest.raises(DataError):
            ClassPrior(3).prior_vector()

    def test_counts_every_label_offered(self):
        # recount oracle: the prior must count the full combined batch
        prior = ClassPrior(3)
        labels = np.array([0, 1, 0, 1, 2, 2, 0, 0])
        prior.update(labels)
        assert prior.counts.tolist() == [4, 2, 2]


class TestSupconLoss:
    def test_two_samples_same_label_is_zero(self):
        z = unit_rows(2, 5, seed=0)
        z[1] = z[0] * -1  # arbitrary unit rows; value must still be 0
        labels = [3, 3]
        value, grad = supcon_loss(z, labels, tau=0.09)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_matches_double_loop_oracle(self):
        z = unit_rows(4, 6, seed=1)
        labels = np.array([0, 1, 0, 1])
        value, _ = supcon_loss(z, labels, tau=0.09)
        assert value == pytest.approx(supcon_oracle(z, labels, 0.09), abs=1e-9)

    def test_oracle_agreement_across_random_batches(self):
        rng = np.random.default_rng(2)
        for trial in range(50):
            n = int(rng.integers(2, 9))
            z = unit_rows(n, 4, seed=100 + trial)
            labels = rng.integers(0, 4, size=n)
            value, _ = supcon_loss(z, labels, tau=0.2)
            oracle = supcon_oracle(z, labels, 0.2)
            assert value == pytest.approx(oracle, abs=1e-9)

    def test_colder_temperature_sharpens_gradient(self):
        z = unit_rows(6, 8, seed=3)
        labels = np.array([0, 0, 1, 1, 2, 2])
        norms = [
            np.linalg.norm(supcon_loss(z, labels, tau=t).grad) for t in (0.5, 0.2, 0.09)
        ]
        assert norms[0] < norms[1] < norms[2]

    def test_no_positive_anchors_contribute_nothing(self):
        z = unit_rows(3, 4, seed=4)
        value, grad = supcon_loss(z, [0, 1, 2], tau=0.09)
        assert value == 0.0
        assert np.all(grad == 0.0)

    def test_permutation_invariance(self):
        z = unit_rows(6, 5, seed=5)
        labels = np.array([0, 1, 0, 2, 1, 2])
        base, _ = supcon_loss(z, labels, tau=0.09)
        perm = np.random.default_rng(6).permutation(6)
        permuted, _ = supcon_loss(z[perm], labels[perm], tau=0.09)
        assert permuted == pytest.approx(base, abs=1e-12)

    def test_single_sample_is_degenerate(self):
        with pytest.raises(DegenerateBatchError):
            supcon_loss(unit_rows(1, 4, seed=0), [0])

    def test_non_positive_temperature(self):
        with pytest.raises(ConfigError):
            supcon_loss(unit_rows(2, 4, seed=0), [0, 0], tau=0.0)

    def test_gradient_matches_finite_differences(self):
        z = unit_rows(5, 4, seed=7)
        labels = np.array([0, 0, 1, 1, 0])
        p = ParamTensor(z.copy())

        def loss(pt):
            return supcon_loss(pt.value, labels, tau=0.2).value

        numeric = finite_difference_gradient(loss, p)
        analytic = supcon_loss(z, labels, tau=0.2).grad
        denom = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-8)
        assert np.abs(numeric - analytic).max() / denom < 1e-4

    def test_returns_loss_result(self):
        out = supcon_loss(unit_rows(2, 4, seed=0), [0, 0])
        assert isinstance(out, LossResult)
        assert out.grad.shape == (2, 4)


class TestEqualizationLoss:
    def prior_from(self, counts):
        prior = ClassPrior(len(counts))
        labels = np.repeat(np.arange(len(counts)), counts)
        prior.update(labels)
        return prior

    def test_uniform_prior_symmetric_logits(self):
        prior = self.prior_from([5, 5])
        value, _ = equalization_loss(np.array([[0.0, 0.0]]), [0], prior)
        assert value == pytest.approx(math.log(2), abs=1e-12)

    def test_equal_logits_collapse_to_prior(self):
        prior = self.prior_from([3, 1])  # prior [0.75, 0.25]
        for c in (0.0, -2.5, 7.0):
            value, _ = equalization_loss(np.array([[c, c]]), [1], prior)
            assert value == pytest.approx(-math.log(0.25), abs=1e-12)

    def test_matches_direct_oracle(self):
        prior = self.prior_from([9, 1])  # prior [0.9, 0.1]
        logits = np.array([[0.2, 0.5]])
        value, _ = equalization_loss(logits, [1], prior)
        oracle = eq_loss_oracle(logits, [1], [0.9, 0.1], [0, 1])
        assert value == pytest.approx(oracle, abs=1e-9)

    def test_never_seen_columns_are_excluded(self):
        prior = ClassPrior(4)
        prior.update([0, 0, 1])
        logits = np.array([[0.0, 0.0, 1e6, 1e6]])  # huge logits on unseen classes
        value, grad = equalization_loss(logits, [0], prior)
        assert np.isfinite(value)
        assert np.all(grad[:, 2:] == 0.0)

    def test_label_outside_seen_set(self):
        prior = ClassPrior(4)
        prior.update([0, 1])
        with pytest.raises(LabelError, match="2"):
            equalization_loss(np.zeros((1, 4)), [2], prior)

    def test_head_class_gradient_damped(self):
        # identical logits, symmetric label placement: the frequent class's own
        # logit must receive the smaller push
        prior = self.prior_from([9, 1])
        logits = np.zeros((2, 2))
        _, grad = equalization_loss(logits, [0, 1], prior)
        head_self = abs(grad[0, 0])
        tail_self = abs(grad[1, 1])
        assert head_self < tail_self

    def test_gradient_matches_finite_differences(self):
        prior = self.prior_from([6, 2, 1])
        logits = np.random.default_rng(8).standard_normal((4, 3))
        labels = np.array([0, 1, 2, 0])
        p = ParamTensor(logits.copy())

        def loss(pt):
            return equalization_loss(pt.value, labels, prior).value

        numeric = finite_difference_gradient(loss, p)
        analytic = equalization_loss(logits, labels, prior).grad
        denom = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-8)
        assert np.abs(numeric - analytic).max() / denom < 1e-4

    def test_empty_batch(self):
        prior = self.prior_from([1, 1])
        with pytest.raises(DataError):
            equalization_loss(np.zeros((0, 2)), [], prior)


class TestCrossEntropyLoss:
    def test_symmetric_two_way(self):
        value, _ = cross_entropy_loss(np.array([[0.0, 0.0]]), [0])
        assert value == pytest.approx(math.log(2), abs=1e-12)

    def test_uniform_prior_equalization_equivalence(self):
        rng = np.random.default_rng(9)
        for trial in range(20):
            k = int(rng.integers(2, 5))
            prior = ClassPrior(k)
            prior.update(np.tile(np.arange(k), 3))  # equal counts
            logits = rng.standard_normal((5, k))
            labels = rng.integers(0, k, size=5)
            eq = equalization_loss(logits, labels, prior)
            ce = cross_entropy_loss(logits, labels)
            assert abs(eq.value - ce.value) < 1e-12
            assert np.abs(eq.grad - ce.grad).max() < 1e-12

    def test_seen_mask_and_index_forms_agree(self):
        logits = np.random.default_rng(10).standard_normal((3, 5))
        labels = [0, 2, 0]
        mask = np.array([True, False, True, False, False])
        by_mask = cross_entropy_loss(logits, labels, seen=mask)
        by_index = cross_entropy_loss(logits, labels, seen=[0, 2])
        assert by_mask.value == by_index.value
        assert np.array_equal(by_mask.grad, by_index.grad)

    def test_restriction_excludes_columns(self):
        logits = np.array([[0.0, 50.0, 0.0]])
        full = cross_entropy_loss(logits, [0]).value
        restricted = cross_entropy_loss(logits, [0], seen=[0, 2]).value
        assert restricted == pytest.approx(math.log(2), abs=1e-12)
        assert full > restricted

    def test_label_outside_seen(self):
        with pytest.raises(LabelError):
            cross_entropy_loss(np.zeros((1, 3)), [1], seen=[0, 2])

    def test_gradient_matches_finite_differences(self):
        logits = np.random.default_rng(11).standard_normal((4, 4))
        labels = np.array([0, 3, 1, 1])
        p = ParamTensor(logits.copy())

        def loss(pt):
            return cross_entropy_loss(pt.value, labels).value

        numeric = finite_difference_gradient(loss, p)
        analytic = cross_entropy_loss(logits, labels).grad
        denom = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-8)
        assert np.abs(numeric - analytic).max() / denom < 1e-4

    def test_losses_non_negative(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            logits = rng.standard_normal((3, 4)) * 3
            labels = rng.integers(0, 4, 3)
            assert cross_entropy_loss(logits, labels).value >= 0.0
