"""
Powell's l1 merit function and the Armijo backtracking line search.

    T(alpha) = f(xi + alpha dxi) + sigma^T |g(xi + alpha dxi)|
    D T(0)   = grad_f^T dxi - sigma^T |g(xi)|
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from opennmpc.errors import NumericalException
from opennmpc.ocp.nlp import NlpInstance, eval_constraint_residual, eval_objective_value
from opennmpc.sqp.options import SqpOptions


def merit_weights_update(sigma: Optional[np.ndarray], mu: np.ndarray, first_iter: bool) -> np.ndarray:
    """
    sigma_i = |mu_i| on the first iteration, otherwise
    sigma_i = max(|mu_i|, (sigma_i + |mu_i|) / 2).
    """
    abs_mu = np.abs(np.asarray(mu, dtype=np.float64))
    if first_iter or sigma is None:
        return abs_mu
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != abs_mu.shape:
        raise ValueError(f"sigma has shape {sigma.shape}, mu has {abs_mu.shape}")
    return np.maximum(abs_mu, 0.5 * (sigma + abs_mu))


def merit_value(f: float, g: np.ndarray, sigma: np.ndarray) -> float:
    return float(f + sigma @ np.abs(g))


def merit_directional_derivative(grad_f: np.ndarray, delta_xi: np.ndarray, g: np.ndarray, sigma: np.ndarray) -> float:
    return float(grad_f @ delta_xi - sigma @ np.abs(g))


@dataclass
class LineSearchResult:
    alpha: float
    evals: int
    exhausted: bool
    merit0: float
    merit_alpha: float
    slope: float
    tried: List[float] = field(default_factory=list)


def backtrack(
    merit: Callable[[float], float],
    merit0: float,
    slope: float,
    opts: SqpOptions,
) -> LineSearchResult:
    """
    Largest alpha in {1, beta, beta^2, ...} with
    T(alpha) <= T(0) + c1 * alpha * D T(0).

    A trial point where ``merit`` raises a NumericalException counts as
    rejected. After ``max_backtracks`` reductions the last alpha is returned
    with ``exhausted`` set.
    """
    alpha = 1.0
    tried: List[float] = []
    value = float("nan")
    for _ in range(opts.max_backtracks + 1):
        tried.append(alpha)
        try:
            value = merit(alpha)
        except NumericalException:
            value = float("nan")
        if np.isfinite(value) and value <= merit0 + opts.c1 * alpha * slope:
            return LineSearchResult(alpha, len(tried), False, merit0, value, slope, tried)
        if len(tried) <= opts.max_backtracks:
            alpha *= opts.beta_ls
    return LineSearchResult(tried[-1], len(tried), True, merit0, value, slope, tried)


def line_search(
    nlp: NlpInstance,
    xi: np.ndarray,
    delta_xi: np.ndarray,
    sigma: np.ndarray,
    grad_f: np.ndarray,
    opts: SqpOptions,
    f0: Optional[float] = None,
    g0: Optional[np.ndarray] = None,
) -> LineSearchResult:
    """
    Armijo backtracking on the l1 merit function of the NLP.

    Args:
        nlp: Problem instance.
        xi: Current iterate.
        delta_xi: QP step.
        sigma: Merit weights, one per equality constraint.
        grad_f: Objective gradient at xi.
        opts: c1, beta_ls and max_backtracks are used.
        f0, g0: Objective and constraint values at xi if already known.

    Returns:
        LineSearchResult; trial points have their inputs clipped into the bounds.
    """
    f0 = eval_objective_value(nlp, xi) if f0 is None else f0
    g0 = eval_constraint_residual(nlp, xi) if g0 is None else g0
    merit0 = merit_value(f0, g0, sigma)
    slope = merit_directional_derivative(grad_f, delta_xi, g0, sigma)

    def merit(alpha: float) -> float:
        trial = nlp.clip_inputs(xi + alpha * delta_xi)
        return merit_value(eval_objective_value(nlp, trial), eval_constraint_residual(nlp, trial), sigma)

    return backtrack(merit, merit0, slope, opts)
