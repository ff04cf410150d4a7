# -*- coding: utf-8 -*-

"""graph.py
Desc: Minibatch K-NN affinity graphs over projected features
"""

import logging

import numpy as np

from .config import DEFAULT_TAU, DEGREE_FLOOR
from .errors import DegenerateInputError, ShapeError
from .numerics import (
    Node,
    clip_min,
    constant,
    exp,
    l2_normalize_rows,
    matmul,
    mul,
    power,
    reduce_sum,
    row_norms,
    scale,
    to_node,
    transpose,
)

logger = logging.getLogger(__name__)


class NeighborSets:
    """K nearest neighbors of every sample, self excluded"""

    def __init__(self, indices: np.ndarray, k: int) -> None:
        self.indices: np.ndarray = np.asarray(indices, dtype=np.int64)
        self.k: int = k

        n = self.indices.shape[0]
        assert self.indices.shape == (n, k), "indices must be n x k"
        assert not (
            self.indices == np.arange(n)[:, None]
        ).any(), "a sample cannot be its own neighbor"

    @property
    def n(self) -> int:
        return self.indices.shape[0]

    def mask(self) -> np.ndarray:
        """n x n 0/1 matrix, entry (i, j) set when j is a neighbor of i"""
        mask = np.zeros((self.n, self.n))
        if self.k > 0:
            rows = np.repeat(np.arange(self.n), self.k)
            mask[rows, self.indices.ravel()] = 1.0
        return mask

    def __getitem__(self, i: int) -> list[int]:
        return self.indices[i].tolist()


class AffinityGraph:
    """Affinity matrix A, its normalized form and the node degrees"""

    def __init__(
        self,
        affinity: Node,
        s_norm: Node,
        degrees: np.ndarray,
        neighbors: NeighborSets | None = None,
        symmetric: bool = True,
    ) -> None:
        self.affinity: Node = affinity
        self.s_norm: Node = s_norm
        self.degrees: np.ndarray = degrees
        self.neighbors: NeighborSets | None = neighbors
        self.symmetric: bool = symmetric

    @property
    def n(self) -> int:
        return self.affinity.shape[0]


def cosine_similarity(features: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities of the rows of a feature matrix

    Raises:
        DegenerateInputError: A row has zero norm
    """
    features = np.asarray(features, dtype=np.float64)
    unit = features / row_norms(features)
    return unit @ unit.T


def knn_neighbors(features: np.ndarray | Node, k: int) -> NeighborSets:
    """Rank every other sample by descending cosine similarity and keep the
    first k; ties go to the lower sample index

    Args:
        features (np.ndarray | Node): n x d features, n >= 2
        k (int): Neighbors per sample, clamped to n - 1

    Raises:
        DegenerateInputError: n < 2, k < 1 or a zero-norm row

    Returns:
        NeighborSets: Neighbor indices, non-differentiable
    """
    if isinstance(features, Node):
        features = features.value
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ShapeError(f"features must be n x d, got {features.shape}")
    n = features.shape[0]
    if n < 2:
        raise DegenerateInputError(f"K-NN graph needs n >= 2, got {n}")
    if k < 1:
        raise DegenerateInputError(f"K-NN graph needs k >= 1, got {k}")
    k = min(k, n - 1)

    similarity = cosine_similarity(features)
    np.fill_diagonal(similarity, -np.inf)
    # stable sort keeps the lower index first among equal similarities
    order = np.argsort(-similarity, axis=1, kind="stable")
    return NeighborSets(order[:, :k], k)


def graph_from_affinity(
    affinity: Node | np.ndarray,
    neighbors: NeighborSets | None = None,
    symmetrize: bool = True,
) -> AffinityGraph:
    """Normalize an affinity matrix into S

    With `symmetrize` the matrix is averaged with its transpose and
    S = D^{-1/2} A D^{-1/2}; otherwise A is used as given and S = D^{-1} A.
    Degrees are floored at DEGREE_FLOOR.

    Args:
        affinity (Node | np.ndarray): n x n nonnegative matrix, zero diagonal
        neighbors (NeighborSets | None, optional):
            Neighbor sets the mask came from. Defaults to None.
        symmetrize (bool, optional): Average A with A^T. Defaults to True.

    Returns:
        AffinityGraph: Graph differentiable through A
    """
    affinity = to_node(affinity)
    n = affinity.shape[0]
    if affinity.shape != (n, n):
        raise ShapeError(f"affinity must be square, got {affinity.shape}")
    if (affinity.value < 0.0).any():
        raise DegenerateInputError("affinity entries must be nonnegative")

    if symmetrize:
        affinity = scale(affinity + transpose(affinity), 0.5)
    degrees = clip_min(reduce_sum(affinity, axis=1), DEGREE_FLOOR)
    isolated = int((degrees.value <= DEGREE_FLOOR).sum())
    if isolated:
        logger.warning("%d isolated node(s), degree floored", isolated)

    if symmetrize:
        inv_sqrt = power(degrees, -0.5)
        s_norm = mul(affinity, matmul(inv_sqrt, transpose(inv_sqrt)))
    else:
        s_norm = mul(affinity, power(degrees, -1.0))

    return AffinityGraph(
        affinity=affinity,
        s_norm=s_norm,
        degrees=degrees.value[:, 0].copy(),
        neighbors=neighbors,
        symmetric=symmetrize,
    )


def build_affinity(
    projected: Node | np.ndarray,
    neighbors: NeighborSets,
    tau: float = DEFAULT_TAU,
    symmetrize: bool = True,
) -> AffinityGraph:
    """a_ij = exp((tau / 2) cos(g_i, g_j)) on the neighbor mask, 0 elsewhere

    Differentiable with respect to the projected features; the mask is
    held constant.

    Args:
        projected (Node | np.ndarray): n x d_g discriminator outputs
        neighbors (NeighborSets): Neighbor sets over the same rows
        tau (float, optional): Scale factor. Defaults to DEFAULT_TAU.
        symmetrize (bool, optional): See graph_from_affinity.

    Raises:
        DegenerateInputError: A projected row has zero norm

    Returns:
        AffinityGraph: Graph with A, S and degrees
    """
    projected = to_node(projected)
    if projected.shape[0] != neighbors.n:
        raise ShapeError(
            f"{projected.shape[0]} projected rows, {neighbors.n} neighbor sets"
        )
    unit = l2_normalize_rows(projected)
    cosine = matmul(unit, transpose(unit))
    affinity = mul(exp(scale(cosine, tau / 2.0)), constant(neighbors.mask()))
    logger.debug(
        "Affinity graph: n=%d, k=%d, tau=%g", neighbors.n, neighbors.k, tau
    )
    return graph_from_affinity(affinity, neighbors, symmetrize=symmetrize)
