# -*- coding: utf-8 -*-

"""compactness.py
Desc: Feature-space compactness metrics and the coding-rate maintenance loss
"""

import logging
from typing import Sequence

import numpy as np

from .config import (
    DEFAULT_EPSILON,
    DEFAULT_K_NN,
    DEFAULT_RHO,
    DEFAULT_XI,
    TRACKER_INIT_FRACTION,
)
from .errors import DegenerateInputError, StateError
from .graph import cosine_similarity, knn_neighbors
from .numerics import (
    Node,
    cholesky_logdet,
    constant,
    l2_normalize_rows,
    logcosh,
    matmul,
    scale,
    sub,
    to_node,
    transpose,
)

logger = logging.getLogger(__name__)


class CompactnessReport:
    """V_k, R and R_C of one feature matrix"""

    def __init__(
        self,
        v_k: float,
        coding_rate: float,
        classwise_rate: float | None,
        epsilon: float,
        k: int,
    ) -> None:
        self.v_k: float = v_k
        self.coding_rate: float = coding_rate
        self.classwise_rate: float | None = classwise_rate
        self.epsilon: float = epsilon
        self.k: int = k

    def to_dict(self) -> dict:
        return {
            "v_k": self.v_k,
            "coding_rate": self.coding_rate,
            "classwise_rate": self.classwise_rate,
            "classwise_rate_omitted": self.classwise_rate is None,
            "epsilon": self.epsilon,
            "k": self.k,
        }


class RateTracker:
    """Exponential moving average R-bar of the minibatch coding rate"""

    def __init__(self, xi: float = DEFAULT_XI) -> None:
        assert 0.0 < xi < 1.0, "xi must lie in (0, 1)"
        self.xi: float = xi
        self.r_bar: float = 0.0
        self.initialized: bool = False

    def initialize(self, value: float) -> "RateTracker":
        self.r_bar = float(value)
        self.initialized = True
        logger.info("Rate tracker initialized at R-bar = %.6f", self.r_bar)
        return self

    def update(self, observed: float) -> "RateTracker":
        return update_tracker(self, observed)


def update_tracker(tracker: RateTracker, observed: float) -> RateTracker:
    """R-bar <- xi R-bar + (1 - xi) R

    Raises:
        StateError: Tracker was never initialized
    """
    if not tracker.initialized:
        raise StateError("rate tracker updated before initialization")
    tracker.r_bar = tracker.xi * tracker.r_bar + (1.0 - tracker.xi) * float(
        observed
    )
    return tracker


def initial_rate(
    history: Sequence[float], fraction: float = TRACKER_INIT_FRACTION
) -> float:
    """Mean of the last `fraction` of the coding rates seen in pretraining

    Raises:
        StateError: Empty history
    """
    if len(history) == 0:
        raise StateError("no pretraining coding rates to initialize from")
    tail = max(1, int(round(len(history) * fraction)))
    return float(np.mean(history[-tail:]))


def _features_array(features: np.ndarray | Node) -> np.ndarray:
    if isinstance(features, Node):
        return features.value
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise DegenerateInputError(
            f"features must be a non-empty n x d matrix: {features.shape}"
        )
    return features


def avg_knn_degree(features: np.ndarray | Node, k: int) -> float:
    """V_k: per-sample sum of cosine similarity to its k nearest neighbors
    (self excluded), averaged over samples"""
    features = _features_array(features)
    neighbors = knn_neighbors(features, k)
    similarity = cosine_similarity(features)
    rows = np.arange(neighbors.n)[:, None]
    return float(similarity[rows, neighbors.indices].sum(axis=1).mean())


def coding_rate(
    features: np.ndarray | Node, epsilon: float = DEFAULT_EPSILON
) -> Node:
    """R(H) = 1/2 log det(I + d / (n eps^2) H^T H) on row-normalized H

    Raises:
        DegenerateInputError: A zero-norm row or eps <= 0

    Returns:
        Node: 1x1, differentiable with respect to the features
    """
    if epsilon <= 0.0:
        raise DegenerateInputError(f"epsilon must be > 0, got {epsilon}")
    features = to_node(features)
    n, d = features.shape
    unit = l2_normalize_rows(features)
    gram = matmul(transpose(unit), unit)
    system = constant(np.eye(d)) + scale(gram, d / (n * epsilon**2))
    return scale(cholesky_logdet(system), 0.5)


def classwise_coding_rate(
    features: np.ndarray | Node,
    class_labels: Sequence[int] | np.ndarray,
    epsilon: float = DEFAULT_EPSILON,
) -> float:
    """R_C(H) = sum_y (N_y / N) R(H^y)

    Raises:
        DegenerateInputError: Empty batch or label count mismatch
    """
    features = _features_array(features)
    labels = np.asarray(class_labels)
    n = features.shape[0]
    if labels.shape[0] != n:
        raise DegenerateInputError(
            f"{labels.shape[0]} class labels for {n} feature rows"
        )
    total = 0.0
    for label in np.unique(labels):
        members = features[labels == label]
        rate = coding_rate(members, epsilon).item()
        total += members.shape[0] / n * rate
    return total


def coding_rate_loss(
    features: np.ndarray | Node,
    tracker: RateTracker,
    rho: float = DEFAULT_RHO,
    epsilon: float = DEFAULT_EPSILON,
    rate: Node | None = None,
) -> Node:
    """L_cr = (1 / rho) log cosh(rho (R(H) - R-bar)), R-bar held constant

    Args:
        features (np.ndarray | Node): Feature matrix H
        tracker (RateTracker): Supplies R-bar
        rho (float, optional): Smoothing. Defaults to DEFAULT_RHO.
        epsilon (float, optional): Precision. Defaults to DEFAULT_EPSILON.
        rate (Node | None, optional): R(H) already on the tape for these
            features. Defaults to None.

    Raises:
        StateError: Tracker not initialized

    Returns:
        Node: 1x1 loss
    """
    if not tracker.initialized:
        raise StateError("coding-rate loss needs an initialized rate tracker")
    assert rho > 0.0, "rho must be > 0"
    if rate is None:
        rate = coding_rate(features, epsilon)
    gap = sub(rate, constant(tracker.r_bar))
    return scale(logcosh(scale(gap, rho)), 1.0 / rho)


def mixing_entropy(
    features: np.ndarray | Node,
    domain_ids: Sequence[int] | np.ndarray,
    k: int = DEFAULT_K_NN,
) -> float:
    """Mean Shannon entropy (nats) of the domain labels among each sample's
    k nearest neighbors"""
    features = _features_array(features)
    domain_ids = np.asarray(domain_ids)
    neighbors = knn_neighbors(features, k)
    neighbor_domains = domain_ids[neighbors.indices]

    entropies = np.zeros(neighbors.n)
    for i, row in enumerate(neighbor_domains):
        _, counts = np.unique(row, return_counts=True)
        share = counts / counts.sum()
        entropies[i] = -(share * np.log(share)).sum()
    return float(entropies.mean())


def compactness_report(
    features: np.ndarray | Node,
    class_labels: Sequence[int] | np.ndarray | None = None,
    epsilon: float = DEFAULT_EPSILON,
    k: int = DEFAULT_K_NN,
) -> CompactnessReport:
    """All three compactness measurements; R_C omitted without labels"""
    features = _features_array(features)
    k = min(k, features.shape[0] - 1)
    return CompactnessReport(
        v_k=avg_knn_degree(features, k),
        coding_rate=coding_rate(features, epsilon).item(),
        classwise_rate=(
            classwise_coding_rate(features, class_labels, epsilon)
            if class_labels is not None
            else None
        ),
        epsilon=epsilon,
        k=k,
    )
