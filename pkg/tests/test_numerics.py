# -*- coding: utf-8 -*-

import numpy as np
import pytest

from context import check_gradient

from ladgpy.errors import DegenerateInputError, NumericalDomainError, ShapeError
from ladgpy.numerics import (
    add,
    as_matrix,
    backward,
    cholesky_factor,
    cholesky_logdet,
    constant,
    diag,
    diag_part,
    exp,
    failing_pivot,
    l2_normalize_rows,
    log,
    log_softmax_rows,
    logcosh,
    matmul,
    mul,
    parameter,
    power,
    reduce_mean,
    reduce_sum,
    relu,
    reverse_gradient,
    scale,
    softmax_rows,
    solve,
    stop_gradient,
    sub,
    take_rows,
    tanh,
    transpose,
    zero_grad,
)


def spd(rng: np.random.Generator, n: int) -> np.ndarray:
    base = rng.normal(size=(n, n))
    return base @ base.T + n * np.eye(n)


class TestMatrices:
    def test_scalar_becomes_one_by_one(self):
        assert as_matrix(3.0).shape == (1, 1)

    def test_rejects_vectors_and_non_finite(self):
        with pytest.raises(ShapeError):
            as_matrix([1.0, 2.0])
        with pytest.raises(NumericalDomainError):
            as_matrix([[np.nan]])

    def test_item_needs_one_by_one(self):
        with pytest.raises(ShapeError):
            constant(np.ones((2, 2))).item()

    def test_constants_do_not_record(self):
        out = add(constant(np.ones((2, 2))), constant(np.ones((2, 2))))
        assert not out.requires_grad
        assert out.is_leaf


class TestBackward:
    def test_needs_scalar_output(self):
        with pytest.raises(ShapeError):
            backward(parameter(np.ones((2, 2))))

    def test_returns_trainable_leaves(self):
        a, b = parameter(np.ones((2, 2))), constant(np.ones((2, 2)))
        leaves = backward(reduce_sum(mul(a, b)))
        assert leaves == (a,)

    def test_leaf_gradients_accumulate(self):
        a = parameter(np.full((1, 3), 2.0))
        backward(reduce_sum(a))
        backward(reduce_sum(a))
        np.testing.assert_array_equal(a.grad, np.full((1, 3), 2.0))

    def test_shared_subexpression(self, rng):
        # f = sum(x * x) + sum(x) reaches x along three paths
        value = rng.normal(size=(3, 2))
        grad = check_gradient(
            lambda x: add(reduce_sum(mul(x, x)), reduce_sum(x)), value
        )
        np.testing.assert_allclose(grad, 2.0 * value + 1.0)

    def test_reverse_gradient(self, rng):
        value = rng.normal(size=(2, 3))
        x = parameter(value)
        out = reverse_gradient(x, 0.5)
        np.testing.assert_array_equal(out.value, value)
        backward(reduce_sum(out))
        np.testing.assert_array_equal(x.grad, np.full((2, 3), -0.5))


class TestElementwiseGradients:
    @pytest.mark.parametrize("seed", range(10))
    def test_broadcast_arithmetic(self, seed):
        rng = np.random.default_rng(seed)
        column = constant(rng.normal(size=(4, 1)))
        row = constant(rng.normal(size=(1, 3)))
        check_gradient(
            lambda x: reduce_sum(mul(sub(add(x, column), row), x)),
            rng.normal(size=(4, 3)),
        )
        weights = constant(rng.normal(size=(4, 3)))
        check_gradient(
            lambda v: reduce_sum(mul(weights, v)), rng.normal(size=(4, 1))
        )

    def test_maps(self, rng):
        value = rng.uniform(0.5, 2.0, size=(3, 3))
        for fn in (exp, log, tanh, logcosh, lambda x: power(x, -0.5)):
            check_gradient(lambda x, fn=fn: reduce_sum(fn(x)), value)

    def test_relu_away_from_the_kink(self, rng):
        value = rng.choice([-1.0, 1.0], size=(3, 4)) * rng.uniform(
            0.1, 1.0, size=(3, 4)
        )
        grad = check_gradient(lambda x: reduce_sum(relu(x)), value)
        np.testing.assert_array_equal(grad, (value > 0).astype(float))

    def test_logcosh_is_stable(self):
        out = logcosh(constant([[1000.0, -1000.0, 0.0]]))
        np.testing.assert_allclose(
            out.value, [[1000.0 - np.log(2.0), 1000.0 - np.log(2.0), 0.0]]
        )

    def test_domain_errors(self):
        with pytest.raises(NumericalDomainError):
            log(constant([[0.0]]))
        with pytest.raises(NumericalDomainError):
            exp(constant([[1000.0]]))
        with pytest.raises(NumericalDomainError):
            power(constant([[-1.0]]), 0.5)


class TestStructureGradients:
    @pytest.mark.parametrize("seed", range(10))
    def test_matmul_and_reductions(self, seed):
        rng = np.random.default_rng(seed)
        right = constant(rng.normal(size=(3, 2)))
        check_gradient(
            lambda x: reduce_mean(mul(matmul(x, right), matmul(x, right))),
            rng.normal(size=(4, 3)),
        )
        check_gradient(
            lambda x: reduce_sum(
                mul(reduce_sum(x, axis=0), reduce_sum(transpose(x), axis=1).T)
            ),
            rng.normal(size=(4, 3)),
        )

    def test_take_rows_accumulates_repeats(self, rng):
        value = rng.normal(size=(3, 2))
        grad = check_gradient(
            lambda x: reduce_sum(take_rows(x, [0, 0, 2])), value
        )
        np.testing.assert_array_equal(grad, [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]])

    def test_diag_part(self, rng):
        check_gradient(
            lambda x: reduce_sum(mul(diag_part(x), diag_part(x))),
            rng.normal(size=(3, 3)),
        )


class TestRowMaps:
    @pytest.mark.parametrize("seed", range(10))
    def test_softmax_gradients(self, seed):
        rng = np.random.default_rng(seed)
        weights = constant(rng.normal(size=(4, 3)))
        value = rng.normal(size=(4, 3))
        check_gradient(
            lambda x: reduce_sum(mul(softmax_rows(x), weights)), value
        )
        check_gradient(
            lambda x: reduce_sum(mul(log_softmax_rows(x), weights)), value
        )

    def test_softmax_rows_sum_to_one(self, rng):
        probs = softmax_rows(constant(rng.normal(size=(5, 4)) * 50.0)).value
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_normalize_rows(self, rng):
        value = rng.normal(size=(4, 3))
        unit = l2_normalize_rows(constant(value)).value
        np.testing.assert_allclose(np.linalg.norm(unit, axis=1), 1.0)
        weights = constant(rng.normal(size=(4, 3)))
        check_gradient(
            lambda x: reduce_sum(mul(l2_normalize_rows(x), weights)), value
        )

    def test_zero_row_is_degenerate(self):
        with pytest.raises(DegenerateInputError):
            l2_normalize_rows(constant([[1.0, 0.0], [0.0, 0.0]]))


class TestLinearAlgebra:
    def test_cholesky_factor_reconstructs(self, rng):
        m = spd(rng, 5)
        factor = cholesky_factor(m)
        np.testing.assert_allclose(factor @ factor.T, m, atol=1e-10)
        assert np.allclose(factor, np.tril(factor))

    def test_logdet_matches_numpy(self, rng):
        m = spd(rng, 6)
        _, expected = np.linalg.slogdet(m)
        assert cholesky_logdet(constant(m)).item() == pytest.approx(
            expected, abs=1e-10
        )

    def test_not_positive_definite_reports_pivot(self):
        m = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])
        with pytest.raises(NumericalDomainError) as info:
            cholesky_logdet(constant(m))
        assert info.value.pivot == 2

    @pytest.mark.parametrize("seed", range(10))
    def test_logdet_gradient(self, seed):
        rng = np.random.default_rng(seed)
        grad = check_gradient(cholesky_logdet, spd(rng, 4))
        np.testing.assert_allclose(grad, grad.T, atol=1e-10)

    @pytest.mark.parametrize("seed", range(10))
    def test_solve_gradient(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(4, 4)) + 4.0 * np.eye(4)
        b = rng.normal(size=(4, 2))
        weights = constant(rng.normal(size=(4, 2)))
        check_gradient(lambda x: reduce_sum(mul(solve(x, b), weights)), a)
        check_gradient(lambda x: reduce_sum(mul(solve(a, x), weights)), b)

    def test_solve_solves(self, rng):
        a = rng.normal(size=(3, 3)) + 3.0 * np.eye(3)
        b = rng.normal(size=(3, 2))
        np.testing.assert_allclose(a @ solve(a, b).value, b, atol=1e-12)

    def test_singular_solve(self):
        with pytest.raises(NumericalDomainError):
            solve(constant([[1.0, 2.0], [2.0, 4.0]]), constant([[1.0], [1.0]]))

    def test_scale_by_python_scalars(self):
        x = parameter([[2.0]])
        out = scale(x * 3.0, 0.5) / 3.0
        backward(out)
        assert out.item() == pytest.approx(1.0)
        assert x.grad[0, 0] == pytest.approx(0.5)

    @pytest.mark.parametrize(
        "m, pivot",
        [
            ([[-1.0]], 0),
            ([[1.0, 2.0], [2.0, 1.0]], 1),
            ([[4.0, 0.0, 0.0], [0.0, 1.0, 1.0], [0.0, 1.0, 1.0]], 2),
        ],
    )
    def test_failing_pivot(self, m, pivot):
        m = np.array(m)
        assert failing_pivot(m) == pivot
        with pytest.raises(NumericalDomainError) as info:
            cholesky_factor(m)
        assert info.value.pivot == pivot


def naive_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


M = np.arange(12.0).reshape(3, 4)


class TestWorkedExamples:
    @pytest.mark.parametrize(
        "a, b, expected",
        [
            (np.eye(3), M, M),
            ([[1.0, 2.0], [3.0, 4.0]], [[0.0], [1.0]], [[2.0], [4.0]]),
        ],
        ids=["identity", "by-hand"],
    )
    def test_matmul(self, a, b, expected):
        np.testing.assert_array_equal(matmul(a, b).value, expected)

    def test_matmul_matches_triple_loop(self, rng):
        a, b = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))
        np.testing.assert_allclose(
            matmul(a, b).value, naive_product(a, b), rtol=0.0, atol=1e-12
        )

    def test_matmul_shape_error(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    @pytest.mark.parametrize(
        "m, expected",
        [
            (np.eye(1), 0.0),
            (np.eye(5), 0.0),
            (np.diag([2.0, 3.0]), np.log(6.0)),
        ],
        ids=["1x1", "5x5", "diag-2-3"],
    )
    def test_logdet(self, m, expected):
        assert cholesky_logdet(m).item() == pytest.approx(expected, abs=1e-12)

    def test_logdet_matches_eigenvalue_product(self, rng):
        m = spd(rng, 6)
        expected = np.log(np.linalg.eigvalsh(m)).sum()
        assert cholesky_logdet(m).item() == pytest.approx(expected, abs=1e-10)

    @pytest.mark.parametrize(
        "a, b, expected",
        [
            (np.eye(3), np.eye(3)[[0, 2, 1]], np.eye(3)[[0, 2, 1]]),
            (2.0 * np.eye(2), [[3.0], [-1.0]], [[1.5], [-0.5]]),
        ],
        ids=["identity", "scalar"],
    )
    def test_solve(self, a, b, expected):
        np.testing.assert_allclose(solve(a, b).value, expected, atol=1e-15)

    def test_solve_residual(self, rng):
        a = rng.normal(size=(8, 8)) + 8.0 * np.eye(8)
        b = rng.normal(size=(8, 3))
        residual = a @ solve(a, b).value - b
        assert np.abs(residual).max() <= 1e-10

    @pytest.mark.parametrize(
        "build, expected",
        [
            (reduce_sum, lambda p: np.ones_like(p)),
            (lambda p: scale(reduce_sum(mul(p, p)), 0.5), lambda p: p),
        ],
        ids=["sum", "half-squared-norm"],
    )
    def test_backward(self, rng, build, expected):
        value = rng.normal(size=(3, 4))
        leaf = parameter(value)
        backward(build(leaf))
        np.testing.assert_allclose(leaf.grad, expected(value), atol=1e-15)

    def test_backward_repeats_after_zero_grad(self, rng):
        leaf = parameter(spd(rng, 4))
        grads = []
        for _ in range(2):
            zero_grad([leaf])
            backward(cholesky_logdet(matmul(leaf, leaf.T)))
            grads.append(leaf.grad.copy())
        np.testing.assert_array_equal(grads[0], grads[1])

    def test_zero_grad_resets(self):
        leaf = parameter(np.ones((2, 2)))
        backward(reduce_sum(leaf))
        zero_grad([leaf])
        np.testing.assert_array_equal(leaf.grad, np.zeros((2, 2)))

    @pytest.mark.parametrize("shape", [(4, 1), (1, 4)])
    def test_diag_construction(self, rng, shape):
        value = rng.normal(size=shape)
        np.testing.assert_array_equal(
            diag(constant(value)).value, np.diagflat(value)
        )
        weights = constant(rng.normal(size=(4, 4)))
        grad = check_gradient(
            lambda x: reduce_sum(mul(diag(x), weights)), value
        )
        np.testing.assert_allclose(
            grad, np.diag(weights.value).reshape(shape), atol=1e-7
        )

    def test_diag_needs_a_vector(self):
        with pytest.raises(ShapeError):
            diag(constant(np.ones((2, 2))))

    def test_stop_gradient_cuts_the_tape(self, rng):
        value = rng.normal(size=(2, 3))
        leaf = parameter(value)
        cut = stop_gradient(leaf)
        np.testing.assert_array_equal(cut.value, value)
        assert not cut.requires_grad
        other = parameter(np.ones((2, 3)))
        reached = backward(reduce_sum(mul(cut, other)))
        assert reached == (other,)
        assert not leaf.grad.any()
