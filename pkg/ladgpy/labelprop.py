# -*- coding: utf-8 -*-

"""labelprop.py
Desc: Label propagation of one-hot domain labels over a minibatch graph.

The converged scores are R* = (I - alpha S)^{-1} E, i.e. the fixed point of
R <- alpha S R + (1 - alpha) E started from R = E. Row-softmax of R* gives
each sample's domain pseudo-probabilities.
"""

import logging
import math

import numpy as np

from .config import DEFAULT_ALPHA, PROPAGATION_MAX_STEPS, PROPAGATION_TOL
from .errors import ConvergenceError, DegenerateInputError, ShapeError
from .graph import AffinityGraph
from .numerics import (
    Node,
    constant,
    diag_part,
    matmul,
    mul,
    scale,
    softmax_rows,
    solve,
    sub,
    to_node,
)

logger = logging.getLogger(__name__)


class PropagationResult:
    """Converged scores and the pseudo-probabilities derived from them"""

    def __init__(
        self,
        r_star: Node,
        probs: Node,
        alpha: float,
        scores: Node | None = None,
        steps: int | None = None,
    ) -> None:
        self.r_star: Node = r_star
        self.probs: Node = probs
        self.alpha: float = alpha
        # matrix the softmax was applied to; differs from r_star only in
        # leave-one-out mode
        self.scores: Node = scores if scores is not None else r_star
        self.steps: int | None = steps


def _check_inputs(
    graph: AffinityGraph, domains: np.ndarray, alpha: float
) -> np.ndarray:
    if not 0.0 < alpha < 1.0:
        raise DegenerateInputError(f"alpha must lie in (0, 1), got {alpha}")
    domains = np.asarray(domains, dtype=np.float64)
    if domains.ndim != 2 or domains.shape[0] != graph.n:
        raise ShapeError(
            f"domain matrix {domains.shape} does not match a graph of "
            + f"{graph.n} samples"
        )
    return domains


def domain_probabilities(r_star: Node | np.ndarray) -> Node:
    """p_ij = exp(r*_ij) / sum_j exp(r*_ij), temperature 1"""
    return softmax_rows(to_node(r_star))


def propagate_closed_form(
    graph: AffinityGraph,
    domains: np.ndarray,
    alpha: float = DEFAULT_ALPHA,
    leave_one_out: bool = False,
) -> PropagationResult:
    """Solve (I - alpha S) R* = (1 - alpha) E and softmax the rows

    Differentiable through S, hence through the projected features the
    graph was built from.

    In leave-one-out mode sample i is scored without its own seed: its row
    becomes r*_i - (1 - alpha) [(I - alpha S)^{-1}]_ii e_i, which is exactly
    the propagation result for E with row i zeroed.

    Args:
        graph (AffinityGraph): Minibatch graph
        domains (np.ndarray): n x S one-hot domain labels E
        alpha (float, optional): Restart parameter. Defaults to DEFAULT_ALPHA.
        leave_one_out (bool, optional): Drop each sample's own seed when
            scoring it. Defaults to False.

    Raises:
        NumericalDomainError: The system is singular

    Returns:
        PropagationResult: r_star, probs and the scores used
    """
    domains = _check_inputs(graph, domains, alpha)
    n = graph.n
    system = sub(constant(np.eye(n)), scale(graph.s_norm, alpha))
    seeds = constant((1.0 - alpha) * domains)

    if not leave_one_out:
        r_star = solve(system, seeds)
        return PropagationResult(
            r_star=r_star, probs=domain_probabilities(r_star), alpha=alpha
        )

    inverse = solve(system, constant(np.eye(n)))
    r_star = matmul(inverse, seeds)
    own_seed = mul(diag_part(inverse), seeds)
    scores = sub(r_star, own_seed)
    return PropagationResult(
        r_star=r_star,
        probs=domain_probabilities(scores),
        alpha=alpha,
        scores=scores,
    )


def propagate_iterative(
    graph: AffinityGraph,
    domains: np.ndarray,
    alpha: float = DEFAULT_ALPHA,
    max_steps: int = PROPAGATION_MAX_STEPS,
    tol: float = PROPAGATION_TOL,
) -> PropagationResult:
    """Iterate R <- alpha S R + (1 - alpha) E from R = E

    Stops once an update changes R by less than `tol` (max-abs). The
    reported step count is the number of updates made before that
    confirming update. Not differentiable; used to cross-check the closed
    form.

    Raises:
        ConvergenceError: `max_steps` updates without reaching `tol`

    Returns:
        PropagationResult: Constant nodes, `steps` set
    """
    domains = _check_inputs(graph, domains, alpha)
    if max_steps < 1:
        raise DegenerateInputError(f"max_steps must be >= 1, got {max_steps}")
    s_norm = graph.s_norm.value
    seeds = (1.0 - alpha) * domains

    scores = domains.copy()
    change = math.inf
    for step in range(1, max_steps + 1):
        updated = alpha * (s_norm @ scores) + seeds
        change = float(np.abs(updated - scores).max())
        scores = updated
        if change < tol:
            logger.debug(
                "Propagation converged after %d updates (change %g)",
                step - 1,
                change,
            )
            r_star = constant(scores)
            return PropagationResult(
                r_star=r_star,
                probs=domain_probabilities(r_star),
                alpha=alpha,
                steps=step - 1,
            )

    residual = fixed_point_residual(graph, domains, alpha, scores)
    logger.error(
        "Propagation did not converge in %d steps (residual %g)",
        max_steps,
        residual,
    )
    raise ConvergenceError(
        f"propagation did not converge in {max_steps} steps "
        + f"(last change {change:g}, residual {residual:g})",
        residual=residual,
        steps=max_steps,
    )


def fixed_point_residual(
    graph: AffinityGraph,
    domains: np.ndarray,
    alpha: float,
    r_star: Node | np.ndarray,
) -> float:
    """max-abs of R - (alpha S R + (1 - alpha) E)"""
    if isinstance(r_star, Node):
        r_star = r_star.value
    domains = np.asarray(domains, dtype=np.float64)
    target = alpha * (graph.s_norm.value @ r_star) + (1.0 - alpha) * domains
    return float(np.abs(r_star - target).max())


def default_max_steps(
    alpha: float, tol: float = PROPAGATION_TOL, minimum: int = 1000
) -> int:
    """Update budget that lets the iteration reach `tol` for alpha near 1

    Updates shrink geometrically by at most alpha, so about
    log(tol) / log(alpha) of them are needed; twice that is budgeted.
    """
    if tol <= 0.0:
        return minimum
    needed = math.log(tol) / math.log(alpha)
    return max(minimum, int(math.ceil(2.0 * needed)))
