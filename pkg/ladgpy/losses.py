# -*- coding: utf-8 -*-

"""losses.py
Desc: Task, domain-discrimination, prior-matching and DANN objectives
"""

import logging

import numpy as np

from .errors import ConfigurationError, ShapeError
from .numerics import (
    Node,
    add,
    constant,
    log,
    log_softmax_rows,
    mul,
    reduce_mean,
    reduce_sum,
    scale,
    sub,
    to_node,
)

logger = logging.getLogger(__name__)


class PriorDistribution:
    """Minibatch domain prior q_j = (1/n) sum_i e_ij"""

    def __init__(self, q: np.ndarray) -> None:
        self.q: np.ndarray = np.asarray(q, dtype=np.float64).reshape(1, -1)

        assert (self.q >= 0.0).all(), "prior entries must be nonnegative"
        assert abs(self.q.sum() - 1.0) <= 1e-12, "prior must sum to 1"

    @classmethod
    def from_domains(cls, domains: np.ndarray) -> "PriorDistribution":
        domains = np.asarray(domains, dtype=np.float64)
        return cls(domains.mean(axis=0))

    @property
    def n_domains(self) -> int:
        return self.q.shape[1]

    def entropy(self) -> float:
        """H(q) in nats, the floor of the prior-matching loss"""
        support = self.q[self.q > 0.0]
        return float(-(support * np.log(support)).sum())


def one_hot(ids: np.ndarray, n_columns: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    out = np.zeros((ids.shape[0], n_columns))
    out[np.arange(ids.shape[0]), ids] = 1.0
    return out


def task_loss(predictions: Node, targets: np.ndarray, task_kind: str) -> Node:
    """Mean cross-entropy on logits, or mean squared error

    Args:
        predictions (Node): n x C logits, or n x 1 regression outputs
        targets (np.ndarray): n class ids, or n real values
        task_kind (str): "classification" or "regression"

    Raises:
        ConfigurationError: Unknown task kind
        ShapeError: Sample counts differ

    Returns:
        Node: 1x1 loss
    """
    predictions = to_node(predictions)
    targets = np.asarray(targets)
    if targets.shape[0] != predictions.shape[0]:
        raise ShapeError(
            f"{predictions.shape[0]} predictions, {targets.shape[0]} targets"
        )
    if task_kind == "classification":
        labels = one_hot(targets, predictions.shape[1])
        log_probs = log_softmax_rows(predictions)
        return scale(
            reduce_mean(reduce_sum(mul(log_probs, constant(labels)), axis=1)),
            -1.0,
        )
    if task_kind == "regression":
        residual = sub(predictions, constant(targets.reshape(-1, 1)))
        return reduce_mean(mul(residual, residual))
    raise ConfigurationError(f"unknown task kind '{task_kind}'")


def domain_disc_loss(probs: Node, domains: np.ndarray) -> Node:
    """-(1/n) sum_i log p_i at the true domain of each sample"""
    probs = to_node(probs)
    domains = np.asarray(domains, dtype=np.float64)
    if domains.shape != probs.shape:
        raise ShapeError(f"probs {probs.shape}, domains {domains.shape}")
    picked = reduce_sum(mul(log(probs), constant(domains)), axis=1)
    return scale(reduce_mean(picked), -1.0)


def prior_matching_loss(probs: Node, prior: PriorDistribution) -> Node:
    """-(1/n) sum_i sum_j q_j log p_ij"""
    probs = to_node(probs)
    if probs.shape[1] != prior.n_domains:
        raise ShapeError(
            f"probs have {probs.shape[1]} domains, prior {prior.n_domains}"
        )
    weighted = reduce_sum(mul(log(probs), constant(prior.q)), axis=1)
    return scale(reduce_mean(weighted), -1.0)


def dann_adversarial_loss(
    probs_mlp: Node, domains: np.ndarray, from_logits: bool = False
) -> Node:
    """Domain cross-entropy of the global softmax head

    The head minimizes it; the featurizer sees it through a gradient
    reversal node placed on the feature path at the call site. With
    `from_logits` the input is the head's raw output and the log-softmax is
    taken directly, which stays finite for saturated heads.
    """
    if not from_logits:
        return domain_disc_loss(probs_mlp, domains)
    logits = to_node(probs_mlp)
    domains = np.asarray(domains, dtype=np.float64)
    if domains.shape != logits.shape:
        raise ShapeError(f"logits {logits.shape}, domains {domains.shape}")
    picked = reduce_sum(mul(log_softmax_rows(logits), constant(domains)), axis=1)
    return scale(reduce_mean(picked), -1.0)


def generator_objective(
    task: Node,
    prior: Node | None = None,
    cr: Node | None = None,
    lam: float = 1.0,
    gamma: float = 0.1,
) -> Node:
    """L_t + lam L_prior + gamma L_cr; zero-weight terms stay off the tape"""
    total = task
    if prior is not None and lam != 0.0:
        total = add(total, scale(prior, lam))
    if cr is not None and gamma != 0.0:
        total = add(total, scale(cr, gamma))
    return total
