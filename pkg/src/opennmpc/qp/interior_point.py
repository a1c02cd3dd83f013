"""
Primal-dual interior-point method for the input-bounded stagewise QP.

Mehrotra predictor-corrector with slack variables s_l = du - lb and
s_u = ub - du carried as their own iterates. Each Newton system is an
equality-constrained LQ problem in the step (ddx, ddu) with barrier-modified
input blocks

    R_bar = R + diag(z_l / s_l + z_u / s_u)
    r_bar = grad_u L - (rc_l - z_l r_l) / s_l + (rc_u - z_u r_u) / s_u

where r_l = du - lb - s_l and r_u = ub - du - s_u are the slack residuals.
It is solved by ``riccati_factor_solve`` on the current residuals, so the
dynamics multipliers come back as new iterates. Infinite bounds carry no
barrier term. Input components with lb == ub are removed before the
iteration and their bound multipliers are recovered from stationarity.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Tuple

import numpy as np

from opennmpc.errors import NotPositiveDefiniteError
from opennmpc.linalg.small import matmul, matmul_tn
from opennmpc.qp.riccati import QpStage, QpStageData, dynamics_residual, riccati_factor_solve, stationarity_residuals

FRACTION_TO_BOUNDARY = 0.995


class QpStatus(str, Enum):
    OPTIMAL = "Optimal"
    MAX_ITER = "MaxIter"
    FAILED = "Failed"


@dataclass
class QpSolution:
    """Step and full multipliers of the QP subproblem.

    ``dx`` holds dx_1..dx_N and ``du`` holds du_0..du_{N-1}; ``mu`` and the
    bound multipliers are concatenated in stage order.
    """
    dx: List[np.ndarray]
    du: List[np.ndarray]
    mu: np.ndarray
    nu_l: np.ndarray
    nu_u: np.ndarray
    iterations: int
    status: QpStatus
    gap: float = float("nan")
    message: str = ""

    @property
    def delta_xi(self) -> np.ndarray:
        """Step in decision-vector order [du_0, dx_1, du_1, ..., dx_N]"""
        parts = [self.du[0]]
        for k in range(1, len(self.du)):
            parts.extend([self.dx[k - 1], self.du[k]])
        parts.append(self.dx[-1])
        return np.concatenate(parts)

    @property
    def ok(self) -> bool:
        return self.status is not QpStatus.FAILED


@dataclass
class _Reduced:
    data: QpStageData
    free: List[np.ndarray] = field(default_factory=list)
    fixed_values: List[np.ndarray] = field(default_factory=list)


def _fixed_mask(lb: np.ndarray, ub: np.ndarray) -> np.ndarray:
    finite = np.isfinite(lb) & np.isfinite(ub)
    width = np.where(finite, ub - lb, np.inf)
    return finite & (width <= 1e-14 * np.maximum(1.0, np.abs(np.where(finite, lb, 0.0))))


def _eliminate_fixed(data: QpStageData) -> _Reduced:
    """Substitute inputs with lb == ub into the dynamics and linear terms"""
    stages: List[QpStage] = []
    free_masks: List[np.ndarray] = []
    fixed_values: List[np.ndarray] = []
    for st in data.stages:
        fixed = _fixed_mask(st.lb, st.ub)
        free = ~fixed
        c = np.where(fixed, st.lb, 0.0)[fixed]
        stages.append(QpStage(
            Q=st.Q,
            M=st.M[:, free],
            R=st.R[np.ix_(free, free)],
            q=st.q + matmul(st.M[:, fixed], c),
            r=st.r[free] + matmul(st.R[np.ix_(free, fixed)], c),
            A=st.A,
            B=st.B[:, free],
            b=st.b + matmul(st.B[:, fixed], c),
            lb=st.lb[free],
            ub=st.ub[free],
        ))
        free_masks.append(free)
        fixed_values.append(c)
    return _Reduced(QpStageData(stages=stages, P_N=data.P_N, p_N=data.p_N), free_masks, fixed_values)


def _initial_inputs(lb: np.ndarray, ub: np.ndarray) -> np.ndarray:
    has_l, has_u = np.isfinite(lb), np.isfinite(ub)
    both = has_l & has_u
    width = np.where(both, ub - lb, np.inf)
    delta = np.where(both, np.minimum(1.0, 0.25 * width), 1.0)
    lo = np.where(has_l, lb + delta, -np.inf)
    hi = np.where(has_u, ub - delta, np.inf)
    v = np.clip(np.zeros_like(lb), lo, hi)
    # one-sided clipping can cross for narrow boxes; fall back to the midpoint
    return np.where(both & (lo > hi), 0.5 * (np.where(both, lb, 0.0) + np.where(both, ub, 0.0)), v)


def _rollout(data: QpStageData, du: List[np.ndarray]) -> List[np.ndarray]:
    dx = [np.zeros(data.stages[0].n_x)]
    for k, st in enumerate(data.stages):
        dx.append(matmul(st.A, dx[k]) + matmul(st.B, du[k]) + st.b)
    return dx


def _max_step(s: np.ndarray, ds: np.ndarray) -> float:
    neg = ds < 0.0
    if not np.any(neg):
        return np.inf
    return float(np.min(-s[neg] / ds[neg]))


def _data_scale(data: QpStageData) -> float:
    scale = float(np.max(np.abs(data.p_N), initial=0.0))
    for st in data.stages:
        for arr in (st.q, st.r, st.b):
            scale = max(scale, float(np.max(np.abs(arr), initial=0.0)))
    return 1.0 + scale


def _masked(mask: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.where(mask, values, 0.0)


class _Barrier:
    """Slacks and bound duals of the finite bounds; unbounded entries hold s = 1, z = 0"""

    def __init__(self, data: QpStageData, du: List[np.ndarray]):
        self.has_l = [np.isfinite(st.lb) for st in data.stages]
        self.has_u = [np.isfinite(st.ub) for st in data.stages]
        self.lb = [_masked(h, st.lb) for h, st in zip(self.has_l, data.stages)]
        self.ub = [_masked(h, st.ub) for h, st in zip(self.has_u, data.stages)]
        self.s_l = [np.where(h, v - lb, 1.0) for h, v, lb in zip(self.has_l, du, self.lb)]
        self.s_u = [np.where(h, ub - v, 1.0) for h, v, ub in zip(self.has_u, du, self.ub)]
        self.z_l = [h.astype(np.float64) for h in self.has_l]
        self.z_u = [h.astype(np.float64) for h in self.has_u]
        self.m = int(sum(h.sum() for h in self.has_l) + sum(h.sum() for h in self.has_u))

    def residuals(self, du: List[np.ndarray]) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        r_l = [_masked(h, v - lb - s) for h, v, lb, s in zip(self.has_l, du, self.lb, self.s_l)]
        r_u = [_masked(h, ub - v - s) for h, v, ub, s in zip(self.has_u, du, self.ub, self.s_u)]
        return r_l, r_u

    def gap(self, s_l=None, s_u=None, z_l=None, z_u=None) -> float:
        if self.m == 0:
            return 0.0
        s_l = self.s_l if s_l is None else s_l
        s_u = self.s_u if s_u is None else s_u
        z_l = self.z_l if z_l is None else z_l
        z_u = self.z_u if z_u is None else z_u
        total = sum(float(np.sum(_masked(h, z * s))) for h, z, s in zip(self.has_l, z_l, s_l))
        total += sum(float(np.sum(_masked(h, z * s))) for h, z, s in zip(self.has_u, z_u, s_u))
        return total / self.m


@dataclass
class _Direction:
    ddx: List[np.ndarray]
    ddu: List[np.ndarray]
    mu: List[np.ndarray]
    ds_l: List[np.ndarray]
    ds_u: List[np.ndarray]
    dz_l: List[np.ndarray]
    dz_u: List[np.ndarray]


def _newton_direction(data: QpStageData, bar: _Barrier, dx, du, r_l, r_u, rc_l, rc_u) -> _Direction:
    """Newton step on the current residuals; rc_* are the complementarity targets"""
    stages, R_bar, r_bar, rcl_eff, rcu_eff = [], [], [], [], []
    for k, st in enumerate(data.stages):
        hl, hu = bar.has_l[k], bar.has_u[k]
        s_l, s_u, z_l, z_u = bar.s_l[k], bar.s_u[k], bar.z_l[k], bar.z_u[k]
        rcl = _masked(hl, rc_l[k] - z_l * r_l[k])
        rcu = _masked(hu, rc_u[k] - z_u * r_u[k])
        grad_x = matmul(st.Q, dx[k]) + matmul(st.M, du[k]) + st.q
        grad_u = matmul_tn(st.M, dx[k]) + matmul(st.R, du[k]) + st.r - z_l + z_u
        b_res = matmul(st.A, dx[k]) + matmul(st.B, du[k]) + st.b - dx[k + 1]
        stages.append(replace(st, q=grad_x, b=b_res))
        R_bar.append(st.R + np.diag(_masked(hl, z_l / s_l) + _masked(hu, z_u / s_u)))
        r_bar.append(grad_u - rcl / s_l + rcu / s_u)
        rcl_eff.append(rcl)
        rcu_eff.append(rcu)
    P_N = np.atleast_2d(data.P_N)
    step = QpStageData(stages=stages, P_N=P_N, p_N=matmul(P_N, dx[-1]) + data.p_N)
    sol = riccati_factor_solve(step, R_bar, r_bar)

    ds_l, ds_u, dz_l, dz_u = [], [], [], []
    for k, d in enumerate(sol.du):
        hl, hu = bar.has_l[k], bar.has_u[k]
        ds_l.append(_masked(hl, d + r_l[k]))
        ds_u.append(_masked(hu, -d + r_u[k]))
        dz_l.append(_masked(hl, (rcl_eff[k] - bar.z_l[k] * d) / bar.s_l[k]))
        dz_u.append(_masked(hu, (rcu_eff[k] + bar.z_u[k] * d) / bar.s_u[k]))
    return _Direction(sol.dx, sol.du, sol.mu, ds_l, ds_u, dz_l, dz_u)


def _step_lengths(bar: _Barrier, d: _Direction) -> Tuple[float, float]:
    alpha_p, alpha_d = np.inf, np.inf
    for k in range(len(d.ddu)):
        hl, hu = bar.has_l[k], bar.has_u[k]
        alpha_p = min(alpha_p, _max_step(bar.s_l[k][hl], d.ds_l[k][hl]), _max_step(bar.s_u[k][hu], d.ds_u[k][hu]))
        alpha_d = min(alpha_d, _max_step(bar.z_l[k][hl], d.dz_l[k][hl]), _max_step(bar.z_u[k][hu], d.dz_u[k][hu]))
    return alpha_p, alpha_d


def _primal_residual(data: QpStageData, dx, du, r_l, r_u) -> float:
    worst = dynamics_residual(data, dx, du)
    for a, b in zip(r_l, r_u):
        worst = max(worst, float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)))
    return worst


def _solve_reduced(data: QpStageData, tol: float, max_iter: int):
    """Returns (dx, du, mu, z_l, z_u, iterations, status, gap)"""
    du = [_initial_inputs(st.lb, st.ub) for st in data.stages]
    bar = _Barrier(data, du)
    if bar.m == 0:
        sol = riccati_factor_solve(data)
        zeros = [np.zeros(st.n_u) for st in data.stages]
        return sol.dx, sol.du, sol.mu, zeros, zeros, 1, QpStatus.OPTIMAL, 0.0

    dx = _rollout(data, du)
    mu = [np.zeros(st.A.shape[0]) for st in data.stages]
    tol_abs = tol * _data_scale(data)
    gap = float("inf")

    for it in range(max_iter + 1):
        r_l, r_u = bar.residuals(du)
        gap = bar.gap()
        if (gap <= tol_abs
                and _primal_residual(data, dx, du, r_l, r_u) <= tol_abs
                and stationarity_residuals(data, dx, du, mu, bar.z_l, bar.z_u) <= tol_abs):
            return dx, du, mu, bar.z_l, bar.z_u, it, QpStatus.OPTIMAL, gap
        if it == max_iter:
            break

        # predictor
        rc_l = [-z * s for z, s in zip(bar.z_l, bar.s_l)]
        rc_u = [-z * s for z, s in zip(bar.z_u, bar.s_u)]
        aff = _newton_direction(data, bar, dx, du, r_l, r_u, rc_l, rc_u)
        a = min(1.0, *_step_lengths(bar, aff))
        gap_aff = bar.gap(
            [s + a * d for s, d in zip(bar.s_l, aff.ds_l)],
            [s + a * d for s, d in zip(bar.s_u, aff.ds_u)],
            [z + a * d for z, d in zip(bar.z_l, aff.dz_l)],
            [z + a * d for z, d in zip(bar.z_u, aff.dz_u)],
        )
        sigma = (gap_aff / gap) ** 3 if gap > 0.0 else 0.0

        # corrector
        rc_l = [sigma * gap - z * s - ds * dz for z, s, ds, dz in zip(bar.z_l, bar.s_l, aff.ds_l, aff.dz_l)]
        rc_u = [sigma * gap - z * s - ds * dz for z, s, ds, dz in zip(bar.z_u, bar.s_u, aff.ds_u, aff.dz_u)]
        cor = _newton_direction(data, bar, dx, du, r_l, r_u, rc_l, rc_u)
        # common step length: every residual shrinks by (1 - a)
        a = min(1.0, FRACTION_TO_BOUNDARY * min(_step_lengths(bar, cor)))

        du = [v + a * d for v, d in zip(du, cor.ddu)]
        dx = [x + a * d for x, d in zip(dx, cor.ddx)]
        mu = [m + a * (m_new - m) for m, m_new in zip(mu, cor.mu)]
        bar.s_l = [np.where(h, s + a * d, 1.0) for h, s, d in zip(bar.has_l, bar.s_l, cor.ds_l)]
        bar.s_u = [np.where(h, s + a * d, 1.0) for h, s, d in zip(bar.has_u, bar.s_u, cor.ds_u)]
        bar.z_l = [_masked(h, z + a * d) for h, z, d in zip(bar.has_l, bar.z_l, cor.dz_l)]
        bar.z_u = [_masked(h, z + a * d) for h, z, d in zip(bar.has_u, bar.z_u, cor.dz_u)]

    return dx, du, mu, bar.z_l, bar.z_u, max_iter, QpStatus.MAX_ITER, gap


def solve_qp(data: QpStageData, tol: float = 1e-10, max_iter: int = 50) -> QpSolution:
    """
    Solve the stagewise QP with input bounds.

    Args:
        data: Stage blocks with bounds lb_k <= du_k <= ub_k (entries may be infinite).
        tol: Tolerance on the complementarity gap, the stationarity residual and
            the primal residuals, relative to 1 + the largest linear term.
        max_iter: Interior-point iteration limit.

    Returns:
        QpSolution. On MaxIter the last iterate is returned; on Failed (a
        barrier-modified block lost definiteness or the bounds are crossed)
        the step is zero.
    """
    N = data.N
    n_x = [st.A.shape[0] for st in data.stages]
    n_u = [st.n_u for st in data.stages]

    def failed(message: str, iterations: int = 0) -> QpSolution:
        return QpSolution(
            dx=[np.zeros(n) for n in n_x],
            du=[np.zeros(n) for n in n_u],
            mu=np.zeros(sum(n_x)),
            nu_l=np.zeros(sum(n_u)),
            nu_u=np.zeros(sum(n_u)),
            iterations=iterations,
            status=QpStatus.FAILED,
            message=message,
        )

    for k, st in enumerate(data.stages):
        if np.any(st.lb > st.ub):
            return failed(f"crossed bounds at stage {k}")

    reduced = _eliminate_fixed(data)
    try:
        dx, du_free, mu, z_l_free, z_u_free, iterations, status, gap = _solve_reduced(reduced.data, tol, max_iter)
    except NotPositiveDefiniteError as exc:
        return failed(f"factorization breakdown: {exc}")

    du_full, nu_l, nu_u = [], [], []
    for k, st in enumerate(data.stages):
        free = reduced.free[k]
        du = np.zeros(st.n_u)
        du[free] = np.clip(du_free[k], st.lb[free], st.ub[free])
        du[~free] = reduced.fixed_values[k]
        zl = np.zeros(st.n_u)
        zu = np.zeros(st.n_u)
        zl[free] = z_l_free[k]
        zu[free] = z_u_free[k]
        if np.any(~free):
            # fixed components: multipliers from the sign of the stationarity residual
            res = matmul_tn(st.M, dx[k]) + matmul(st.R, du) + st.r - matmul_tn(st.B, mu[k])
            zl[~free] = np.maximum(res[~free], 0.0)
            zu[~free] = np.maximum(-res[~free], 0.0)
        du_full.append(du)
        nu_l.append(zl)
        nu_u.append(zu)

    return QpSolution(
        dx=list(dx[1:N + 1]),
        du=du_full,
        mu=np.concatenate(mu),
        nu_l=np.concatenate(nu_l),
        nu_u=np.concatenate(nu_u),
        iterations=iterations,
        status=status,
        gap=gap,
    )
