# -*- coding: utf-8 -*-

import numpy as np
import pytest

from context import check_gradient

from ladgpy.errors import DegenerateInputError
from ladgpy.graph import (
    NeighborSets,
    build_affinity,
    graph_from_affinity,
    knn_neighbors,
)
from ladgpy.numerics import constant, mul, reduce_sum


class TestNeighbors:
    def test_orthogonal_ties_go_to_lower_index(self):
        neighbors = knn_neighbors(np.eye(3), 1)
        assert neighbors.indices[:, 0].tolist() == [1, 0, 0]

    def test_points_on_a_line(self):
        features = np.array([[1.0, 1.0], [2.0, 1.0], [10.0, 1.0]])
        assert knn_neighbors(features, 1)[2] == [1]

    def test_k_is_clamped(self, rng):
        neighbors = knn_neighbors(rng.normal(size=(4, 3)), 9)
        assert neighbors.k == 3
        assert neighbors.indices.shape == (4, 3)

    def test_self_excluded(self, rng):
        neighbors = knn_neighbors(rng.normal(size=(12, 3)), 5)
        assert not (neighbors.indices == np.arange(12)[:, None]).any()
        assert np.diag(neighbors.mask()).sum() == 0.0

    def test_degenerate_inputs(self):
        with pytest.raises(DegenerateInputError):
            knn_neighbors(np.array([[1.0, 0.0], [0.0, 0.0]]), 1)
        with pytest.raises(DegenerateInputError):
            knn_neighbors(np.ones((1, 2)), 1)
        with pytest.raises(DegenerateInputError):
            knn_neighbors(np.eye(3), 0)

    def test_self_neighbor_rejected(self):
        with pytest.raises(AssertionError):
            NeighborSets(np.array([[0], [0]]), 1)


class TestAffinity:
    def test_identical_pair(self):
        features = np.array([[1.0, 0.0], [1.0, 0.0]])
        graph = build_affinity(features, knn_neighbors(features, 1), tau=2.0)
        assert graph.affinity.value[0, 1] == pytest.approx(np.e)

    def test_orthogonal_pair(self):
        features = np.eye(2)
        graph = build_affinity(features, knn_neighbors(features, 1), tau=2.0)
        assert graph.affinity.value[0, 1] == pytest.approx(1.0)

    def test_random_batch_is_symmetric_and_bounded(self, rng):
        features = rng.normal(size=(20, 4))
        graph = build_affinity(features, knn_neighbors(features, 5))
        a, s = graph.affinity.value, graph.s_norm.value
        np.testing.assert_allclose(a, a.T)
        np.testing.assert_allclose(s, s.T, atol=1e-15)
        assert np.diag(a).sum() == 0.0
        assert np.abs(np.linalg.eigvalsh(s)).max() <= 1.0 + 1e-10

    def test_support_follows_the_mask(self, rng):
        features = rng.normal(size=(10, 3))
        neighbors = knn_neighbors(features, 2)
        mask = neighbors.mask()
        a = build_affinity(features, neighbors).affinity.value
        np.testing.assert_array_equal(a > 0.0, (mask + mask.T) > 0.0)

    def test_scale_invariance(self, rng):
        features = rng.normal(size=(8, 3))
        neighbors = knn_neighbors(features, 3)
        np.testing.assert_allclose(
            build_affinity(features, neighbors).affinity.value,
            build_affinity(7.5 * features, neighbors).affinity.value,
        )

    def test_permutation_equivariance(self, rng):
        features = rng.normal(size=(9, 3))
        order = rng.permutation(9)
        graph = build_affinity(features, knn_neighbors(features, 3))
        permuted = build_affinity(
            features[order], knn_neighbors(features[order], 3)
        )
        np.testing.assert_allclose(
            permuted.s_norm.value,
            graph.s_norm.value[np.ix_(order, order)],
            atol=1e-14,
        )

    def test_raw_mask_uses_row_degrees(self, rng):
        features = rng.normal(size=(10, 3))
        graph = build_affinity(
            features, knn_neighbors(features, 3), symmetrize=False
        )
        assert not graph.symmetric
        np.testing.assert_allclose(graph.s_norm.value.sum(axis=1), 1.0)

    def test_isolated_node_is_floored(self):
        graph = graph_from_affinity(np.zeros((1, 1)))
        assert graph.s_norm.value[0, 0] == 0.0
        assert graph.degrees[0] == pytest.approx(1e-12)

    def test_negative_affinity_rejected(self):
        with pytest.raises(DegenerateInputError):
            graph_from_affinity(np.array([[0.0, -1.0], [-1.0, 0.0]]))

    def test_zero_projection_rejected(self):
        features = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        neighbors = knn_neighbors(features, 1)
        features[2] = 0.0
        with pytest.raises(DegenerateInputError):
            build_affinity(features, neighbors)

    @pytest.mark.parametrize("seed", range(10))
    def test_gradient_through_normalized_graph(self, seed):
        rng = np.random.default_rng(seed)
        features = rng.normal(size=(7, 3))
        neighbors = knn_neighbors(features, 3)
        weights = constant(rng.normal(size=(7, 7)))
        check_gradient(
            lambda g: reduce_sum(
                mul(build_affinity(g, neighbors, tau=2.0).s_norm, weights)
            ),
            features,
        )
