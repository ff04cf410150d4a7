# -*- coding: utf-8 -*-

import numpy as np
import pytest

from context import check_gradient

from ladgpy.data import gen_shifted_gaussians
from ladgpy.errors import ConfigurationError, ShapeError
from ladgpy.graph import build_affinity, knn_neighbors
from ladgpy.labelprop import propagate_closed_form
from ladgpy.losses import (
    PriorDistribution,
    dann_adversarial_loss,
    domain_disc_loss,
    generator_objective,
    one_hot,
    prior_matching_loss,
    task_loss,
)
from ladgpy.numerics import (
    add,
    backward,
    constant,
    matmul,
    parameter,
    softmax_rows,
    zero_grad,
)


def random_probs(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    logits = rng.normal(size=(n, k))
    probs = np.exp(logits)
    return probs / probs.sum(axis=1, keepdims=True)


class TestTaskLoss:
    def test_uniform_logits(self):
        logits = constant(np.zeros((4, 3)))
        loss = task_loss(logits, [0, 1, 2, 0], "classification")
        assert loss.item() == pytest.approx(np.log(3.0))

    def test_squared_error(self):
        loss = task_loss(constant([[1.0], [3.0]]), [0.0, 1.0], "regression")
        assert loss.item() == pytest.approx(2.5)

    @pytest.mark.parametrize("seed", range(10))
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 3, 6)
        check_gradient(
            lambda z: task_loss(z, labels, "classification"),
            rng.normal(size=(6, 3)),
        )
        targets = rng.normal(size=6)
        check_gradient(
            lambda z: task_loss(z, targets, "regression"),
            rng.normal(size=(6, 1)),
        )

    def test_errors(self):
        with pytest.raises(ShapeError):
            task_loss(constant(np.zeros((3, 2))), [0, 1], "classification")
        with pytest.raises(ConfigurationError):
            task_loss(constant(np.zeros((2, 2))), [0, 1], "ranking")


class TestDomainLosses:
    def test_disc_loss_picks_the_true_domain(self):
        probs = constant([[0.5, 0.5], [0.25, 0.75]])
        loss = domain_disc_loss(probs, one_hot([0, 1], 2))
        expected = -(np.log(0.5) + np.log(0.75)) / 2
        assert loss.item() == pytest.approx(expected)

    def test_prior_loss_is_bounded_below_by_the_entropy(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            k = int(rng.integers(2, 6))
            prior = PriorDistribution(random_probs(rng, 1, k)[0])
            loss = prior_matching_loss(
                constant(random_probs(rng, 5, k)), prior
            ).item()
            assert loss >= prior.entropy() - 1e-12

    def test_prior_loss_equals_entropy_at_the_prior(self):
        prior = PriorDistribution.from_domains(one_hot([0, 0, 1, 2], 3))
        np.testing.assert_allclose(prior.q, [[0.5, 0.25, 0.25]])
        probs = constant(np.tile(prior.q, (6, 1)))
        assert prior_matching_loss(probs, prior).item() == pytest.approx(
            prior.entropy(), abs=1e-12
        )

    def test_collapsed_pairs_lose_on_discrimination_not_on_the_prior(self):
        # domain B repeats A's samples and D repeats C's; AB sits far from CD
        dataset = gen_shifted_gaussians(
            n_per_domain=16,
            n_classes=1,
            n_features=8,
            domain_shift_scale=5.0,
            noise_sd=0.01,
            collapsed_pairs=True,
            seed=4,
        )
        rows = dataset.domain_ids < 4
        features = dataset.inputs[rows]
        domains = one_hot(dataset.domain_ids[rows], 4)
        prior = PriorDistribution.from_domains(domains)
        pair_chance = np.log(2.0)

        # a global softmax head cannot separate identical samples
        weights = parameter(np.zeros((8, 4)))
        bias = parameter(np.zeros((1, 4)))
        losses = []
        for _ in range(50):
            loss = dann_adversarial_loss(
                add(matmul(features, weights), bias), domains, from_logits=True
            )
            losses.append(loss.item())
            zero_grad([weights, bias])
            backward(loss)
            weights.value = weights.value - 0.01 * weights.grad
            bias.value = bias.value - 0.01 * bias.grad
        assert losses[0] == pytest.approx(np.log(4.0))
        assert losses[-1] < losses[0]
        assert min(losses) >= pair_chance - 1e-12

        alpha = 0.8
        graph = build_affinity(features, knn_neighbors(features, 10), 2.0)
        result = propagate_closed_form(graph, domains, alpha)
        ab_rows = domains[:, :2].sum(axis=1) == 1.0
        assert np.abs(result.r_star.value[ab_rows][:, 2:]).max() < 1e-10

        # every row keeps at least its own seed (1 - alpha) inside its pair,
        # so KL(q || p_i) >= log((e^{s/2} + 1) / 2) - s/4 at s = 1 - alpha
        s = 1.0 - alpha
        floor = np.log((np.exp(s / 2.0) + 1.0) / 2.0) - s / 4.0
        gap = prior_matching_loss(result.probs, prior).item() - prior.entropy()
        assert gap >= floor > 1e-3

    @pytest.mark.parametrize("seed", range(10))
    def test_prior_gradient(self, seed):
        rng = np.random.default_rng(seed)
        prior = PriorDistribution(random_probs(rng, 1, 3)[0])
        check_gradient(
            lambda z: prior_matching_loss(softmax_rows(z), prior),
            rng.normal(size=(5, 3)),
        )

    def test_prior_must_be_a_distribution(self):
        with pytest.raises(AssertionError):
            PriorDistribution([0.5, 0.6])

    def test_width_mismatch(self, rng):
        prior = PriorDistribution([0.5, 0.5])
        with pytest.raises(ShapeError):
            prior_matching_loss(constant(random_probs(rng, 3, 3)), prior)


class TestDann:
    def test_logits_match_probabilities(self, rng):
        logits = rng.normal(size=(6, 3))
        domains = one_hot([0, 1, 2, 0, 1, 2], 3)
        from_probs = dann_adversarial_loss(
            softmax_rows(constant(logits)), domains
        ).item()
        from_logits = dann_adversarial_loss(
            constant(logits), domains, from_logits=True
        ).item()
        assert from_logits == pytest.approx(from_probs, abs=1e-12)

    def test_saturated_head_stays_finite(self):
        logits = constant([[800.0, -800.0]])
        loss = dann_adversarial_loss(logits, one_hot([1], 2), from_logits=True)
        assert loss.item() == pytest.approx(1600.0)


class TestGeneratorObjective:
    def test_weighted_sum(self):
        total = generator_objective(
            constant([[1.0]]), constant([[2.0]]), constant([[3.0]]), 0.5, 0.1
        )
        assert total.item() == pytest.approx(1.0 + 1.0 + 0.3)

    def test_zero_weights_stay_off_the_tape(self):
        task = parameter([[1.0]])
        prior = parameter([[2.0]])
        cr = parameter([[3.0]])
        total = generator_objective(task, prior, cr, lam=0.0, gamma=0.0)
        assert total is task
        total = generator_objective(task, prior, cr, lam=1.0, gamma=0.0)
        reached = backward(total)
        assert any(leaf is prior for leaf in reached)
        assert not any(leaf is cr for leaf in reached)
        assert not cr.grad.any()
