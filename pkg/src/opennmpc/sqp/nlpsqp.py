"""
Structured SQP for the multiple-shooting regulator NLP.

Each iteration solves the stagewise QP built from the block Hessian, the
objective gradient and the linearized dynamics, globalizes the step with an
l1 merit line search and updates the Hessian blocks by damped BFGS.

Lagrangian and multiplier signs:

    L = f - lambda^T g - pi_l^T (u - u_min) - pi_u^T (u_max - u)

so the QP multipliers (mu, nu_l, nu_u) are the full new values of
(lambda, pi_l, pi_u).
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from opennmpc.errors import NumericalException
from opennmpc.ocp.nlp import NlpInstance, StageBlocks, constraint_jacobian_transpose_product, eval_constraints, eval_objective
from opennmpc.qp.interior_point import QpSolution, QpStatus, solve_qp
from opennmpc.qp.riccati import QpStage, QpStageData
from opennmpc.sqp.bfgs import identity_blocks, update_hessian_blocks
from opennmpc.sqp.merit import line_search, merit_weights_update
from opennmpc.sqp.options import SqpOptions


class SqpStatus(str, Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    QP_FAILED = "QpFailed"
    EVAL_FAILED = "EvalFailed"


@dataclass
class SqpMultipliers:
    lam: np.ndarray
    pi_l: np.ndarray
    pi_u: np.ndarray


@dataclass
class SqpState:
    xi: np.ndarray
    lam: np.ndarray
    pi_l: np.ndarray
    pi_u: np.ndarray
    W_blocks: List[np.ndarray]
    sigma_merit: Optional[np.ndarray] = None
    iter: int = 0


@dataclass
class SqpReport:
    status: SqpStatus
    iterations: int = 0
    stationarity: float = float("nan")
    feasibility: float = float("nan")
    scale: float = 1.0
    objective: float = float("nan")
    alphas: List[float] = field(default_factory=list)
    hessian_resets: int = 0
    skipped_updates: int = 0
    line_search_exhaustions: int = 0
    qp_iterations: int = 0
    qp_max_iter: int = 0
    qp_failures: int = 0

    @property
    def converged(self) -> bool:
        return self.status is SqpStatus.CONVERGED

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "iterations": self.iterations,
            "stationarity": self.stationarity,
            "feasibility": self.feasibility,
            "scale": self.scale,
            "objective": self.objective,
            "alphas": list(self.alphas),
            "hessian_resets": self.hessian_resets,
            "skipped_updates": self.skipped_updates,
            "line_search_exhaustions": self.line_search_exhaustions,
            "qp_iterations": self.qp_iterations,
            "qp_max_iter": self.qp_max_iter,
            "qp_failures": self.qp_failures,
        }


def lagrangian_gradient(
    nlp: NlpInstance,
    grad_f: np.ndarray,
    blocks: List[StageBlocks],
    lam: np.ndarray,
    pi_l: np.ndarray,
    pi_u: np.ndarray,
) -> np.ndarray:
    """grad f - (dg/dxi)^T lambda - E (pi_l - pi_u), E injecting into the input slots"""
    grad = grad_f - constraint_jacobian_transpose_product(nlp, blocks, lam)
    grad[nlp.layout.u_index()] -= pi_l - pi_u
    return grad


def convergence_scale(lam: np.ndarray, pi_l: np.ndarray, pi_u: np.ndarray, m_e: int, m_l: int, m_u: int, s_max: float) -> float:
    """s_d = max(s_max, (|lambda|_1 + |pi_l|_1 + |pi_u|_1) / (m_e + m_l + m_u)) / s_max"""
    total = m_e + m_l + m_u
    if total <= 0:
        raise ValueError("check_convergence needs at least one constraint or bound")
    mean_abs = (np.sum(np.abs(lam)) + np.sum(np.abs(pi_l)) + np.sum(np.abs(pi_u))) / total
    return max(s_max, float(mean_abs)) / s_max


def scaled_kkt_residuals(
    grad_L: np.ndarray,
    g: np.ndarray,
    lam: np.ndarray,
    pi_l: np.ndarray,
    pi_u: np.ndarray,
    m_e: int,
    m_l: int,
    m_u: int,
    opts: SqpOptions,
) -> Tuple[float, float, float]:
    """(|grad L / s_d|_inf, |g|_inf, s_d)"""
    s_d = convergence_scale(lam, pi_l, pi_u, m_e, m_l, m_u, opts.s_max)
    stationarity = float(np.max(np.abs(grad_L), initial=0.0)) / s_d
    feasibility = float(np.max(np.abs(g), initial=0.0))
    return stationarity, feasibility, s_d


def check_convergence(grad_L, g, lam, pi_l, pi_u, m_e: int, m_l: int, m_u: int, opts: SqpOptions) -> bool:
    stationarity, feasibility, _ = scaled_kkt_residuals(grad_L, g, lam, pi_l, pi_u, m_e, m_l, m_u, opts)
    return stationarity <= opts.eps and feasibility <= opts.eps


def build_qp(nlp: NlpInstance, xi: np.ndarray, W_blocks: List[np.ndarray], grad_f: np.ndarray, blocks: List[StageBlocks]) -> QpStageData:
    """Stagewise QP at xi; bounds are shifted to the step (u_min - u_k, u_max - u_k)"""
    lay = nlp.layout
    n_x, n_u = nlp.model.n_x, nlp.model.n_u
    N = nlp.horizon.N
    stages: List[QpStage] = []
    for k in range(N):
        u_k = xi[lay.u_slice(k)]
        W = W_blocks[k]
        if k == 0:
            Q, M, R = np.zeros((n_x, n_x)), np.zeros((n_x, n_u)), W
            q = np.zeros(n_x)
        else:
            Q, M, R = W[:n_x, :n_x], W[:n_x, n_x:], W[n_x:, n_x:]
            q = grad_f[lay.x_slice(k)]
        stages.append(QpStage(
            Q=Q, M=M, R=R, q=q, r=grad_f[lay.u_slice(k)],
            A=blocks[k].A, B=blocks[k].B, b=blocks[k].b,
            lb=nlp.u_min - u_k, ub=nlp.u_max - u_k,
        ))
    return QpStageData(stages=stages, P_N=W_blocks[N], p_N=grad_f[lay.x_slice(N)])


def sqp_solve(
    nlp: NlpInstance,
    xi0: np.ndarray,
    opts: Optional[SqpOptions] = None,
) -> Tuple[np.ndarray, SqpMultipliers, SqpReport]:
    """
    Solve the regulator NLP from the start point xi0.

    Args:
        nlp: Problem instance.
        xi0: Start point; its inputs are clipped into the bounds first.
        opts: Solver options; defaults if omitted.

    Returns:
        (xi, multipliers, report). On MaxIter or QpFailed the last iterate is
        returned and is still usable as a control.
    """
    opts = opts or SqpOptions()
    lay = nlp.layout
    N, n_x, n_u = nlp.horizon.N, nlp.model.n_x, nlp.model.n_u
    m_e, m_l, m_u = N * n_x, N * n_u, N * n_u

    var_scale = nlp.variable_scale()
    state = SqpState(
        xi=nlp.clip_inputs(np.asarray(xi0, dtype=np.float64)),
        lam=np.zeros(m_e),
        pi_l=np.zeros(m_l),
        pi_u=np.zeros(m_u),
        W_blocks=identity_blocks(lay, var_scale),
    )
    report = SqpReport(status=SqpStatus.MAX_ITER)
    f, grad_f = eval_objective(nlp, state.xi)
    g, blocks = eval_constraints(nlp, state.xi)

    while True:
        grad_L = lagrangian_gradient(nlp, grad_f, blocks, state.lam, state.pi_l, state.pi_u)
        report.stationarity, report.feasibility, report.scale = scaled_kkt_residuals(
            grad_L, g, state.lam, state.pi_l, state.pi_u, m_e, m_l, m_u, opts
        )
        report.objective = f
        report.iterations = state.iter
        if report.stationarity <= opts.eps and report.feasibility <= opts.eps:
            report.status = SqpStatus.CONVERGED
            break
        if state.iter >= opts.max_iter:
            report.status = SqpStatus.MAX_ITER
            break

        qp = _solve_subproblem(nlp, state, grad_f, blocks, opts, report)
        if qp is None:
            report.status = SqpStatus.QP_FAILED
            break
        delta_xi = qp.delta_xi

        first = state.sigma_merit is None
        state.sigma_merit = merit_weights_update(state.sigma_merit, qp.mu, first_iter=first)
        ls = line_search(nlp, state.xi, delta_xi, state.sigma_merit, grad_f, opts, f0=f, g0=g)
        alpha = ls.alpha
        report.alphas.append(alpha)
        if ls.exhausted:
            report.line_search_exhaustions += 1

        xi_new = nlp.clip_inputs(state.xi + alpha * delta_xi)
        state.lam = state.lam + alpha * (qp.mu - state.lam)
        state.pi_l = state.pi_l + alpha * (qp.nu_l - state.pi_l)
        state.pi_u = state.pi_u + alpha * (qp.nu_u - state.pi_u)

        try:
            f_new, grad_f_new = eval_objective(nlp, xi_new)
            g_new, blocks_new = eval_constraints(nlp, xi_new)
        except NumericalException:
            report.status = SqpStatus.EVAL_FAILED
            break
        # both gradients with the new multipliers
        grad_L_old = lagrangian_gradient(nlp, grad_f, blocks, state.lam, state.pi_l, state.pi_u)
        grad_L_new = lagrangian_gradient(nlp, grad_f_new, blocks_new, state.lam, state.pi_l, state.pi_u)
        hess = update_hessian_blocks(state.W_blocks, xi_new - state.xi, grad_L_new - grad_L_old, lay, var_scale)
        state.W_blocks = hess.blocks
        report.skipped_updates += hess.skipped
        if hess.reset:
            report.hessian_resets += 1

        state.xi, f, grad_f, g, blocks = xi_new, f_new, grad_f_new, g_new, blocks_new
        state.iter += 1

    return state.xi, SqpMultipliers(state.lam, state.pi_l, state.pi_u), report


def _solve_subproblem(nlp, state: SqpState, grad_f, blocks, opts: SqpOptions, report: SqpReport) -> Optional[QpSolution]:
    """QP solve with one retry from an identity Hessian on failure"""
    for attempt in range(2):
        qp = solve_qp(build_qp(nlp, state.xi, state.W_blocks, grad_f, blocks), tol=opts.qp_tol, max_iter=opts.qp_max_iter)
        report.qp_iterations += qp.iterations
        if qp.status is QpStatus.MAX_ITER:
            report.qp_max_iter += 1
        if qp.ok:
            return qp
        report.qp_failures += 1
        if attempt == 0:
            state.W_blocks = identity_blocks(nlp.layout, nlp.variable_scale())
            report.hessian_resets += 1
    return None
