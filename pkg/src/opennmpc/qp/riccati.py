"""
Stagewise QP data and the Riccati recursion for its equality-constrained core.

The QP is

    min  sum_{k=0}^{N-1} 1/2 [dx_k; du_k]^T [Q_k M_k; M_k^T R_k] [dx_k; du_k] + q_k^T dx_k + r_k^T du_k
         + 1/2 dx_N^T P_N dx_N + p_N^T dx_N
    s.t. dx_{k+1} = A_k dx_k + B_k du_k + b_k,   dx_0 = 0
         lb_k <= du_k <= ub_k

Dynamics use the natural orientation: A_k is dF_k/dx_k (n_x x n_x) and B_k is
dF_k/du_k (n_x x n_u). A formulation that writes A_k^T dx_k + B_k^T du_k
stores the transposed jacobians; the two are the same problem.

Sign convention for the multipliers (shared with the SQP driver): with
c_k = A_k dx_k + B_k du_k + b_k - dx_{k+1} the Lagrangian is
L = cost - sum mu_k^T c_k - nu_l^T (du - lb) - nu_u^T (ub - du), so that

    Q_k dx_k + M_k du_k + q_k - A_k^T mu_k + mu_{k-1} = 0
    M_k^T dx_k + R_k du_k + r_k - B_k^T mu_k - nu_l + nu_u = 0
    P_N dx_N + p_N + mu_{N-1} = 0
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from opennmpc.linalg.small import cholesky_factor, cholesky_solve, matmul, matmul_tn, symmetrize


@dataclass
class QpStage:
    """Blocks of stage k. For k = 0, Q, M and q are zero since dx_0 = 0."""
    Q: np.ndarray
    M: np.ndarray
    R: np.ndarray
    q: np.ndarray
    r: np.ndarray
    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    @property
    def n_x(self) -> int:
        return self.A.shape[1]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]


@dataclass
class QpStageData:
    stages: List[QpStage]
    P_N: np.ndarray
    p_N: np.ndarray

    @property
    def N(self) -> int:
        return len(self.stages)

    def layout_size(self) -> int:
        return sum(st.n_u for st in self.stages) + sum(st.A.shape[0] for st in self.stages)


@dataclass
class RiccatiSolution:
    dx: List[np.ndarray]  # k = 0..N, dx[0] = 0
    du: List[np.ndarray]  # k = 0..N-1
    mu: List[np.ndarray]  # k = 0..N-1
    P: List[np.ndarray] = field(default_factory=list)
    p: List[np.ndarray] = field(default_factory=list)


def riccati_factor_solve(
    data: QpStageData,
    R_bar: Optional[Sequence[np.ndarray]] = None,
    r_bar: Optional[Sequence[np.ndarray]] = None,
) -> RiccatiSolution:
    """
    Solve the equality-constrained LQ problem by backward Riccati recursion
    and forward rollout.

    Args:
        data: Stage data; bounds are ignored here.
        R_bar, r_bar: Optional per-stage replacements of R_k and r_k (the
            barrier-modified blocks of the interior-point iteration).

    Returns:
        RiccatiSolution with states, inputs, dynamics multipliers and the
        cost-to-go matrices.

    Raises:
        NotPositiveDefiniteError: a reduced input Hessian is not positive definite.
    """
    N = data.N
    P_list: List[np.ndarray] = [None] * (N + 1)
    p_list: List[np.ndarray] = [None] * (N + 1)
    K_list: List[np.ndarray] = [None] * N
    k_list: List[np.ndarray] = [None] * N
    P = symmetrize(np.atleast_2d(data.P_N))
    p = np.asarray(data.p_N, dtype=np.float64)
    P_list[N], p_list[N] = P, p

    for k in range(N - 1, -1, -1):
        st = data.stages[k]
        R_k = st.R if R_bar is None else R_bar[k]
        r_k = st.r if r_bar is None else r_bar[k]
        PA = matmul(P, st.A)
        PB = matmul(P, st.B)
        Pb_p = matmul(P, st.b) + p
        Qxx = st.Q + matmul_tn(st.A, PA)
        Quu = symmetrize(R_k + matmul_tn(st.B, PB))
        Qux = st.M.T + matmul_tn(st.B, PA)
        qx = st.q + matmul_tn(st.A, Pb_p)
        qu = r_k + matmul_tn(st.B, Pb_p)
        L = cholesky_factor(Quu)
        K = -cholesky_solve(L, Qux)
        kff = -cholesky_solve(L, qu)
        P = symmetrize(Qxx + matmul_tn(Qux, K))
        p = qx + matmul_tn(Qux, kff)
        K_list[k], k_list[k] = K, kff
        P_list[k], p_list[k] = P, p

    dx = [np.zeros(data.stages[0].n_x)]
    du: List[np.ndarray] = []
    mu: List[np.ndarray] = []
    for k in range(N):
        st = data.stages[k]
        u_k = matmul(K_list[k], dx[k]) + k_list[k]
        x_next = matmul(st.A, dx[k]) + matmul(st.B, u_k) + st.b
        du.append(u_k)
        dx.append(x_next)
        mu.append(-(matmul(P_list[k + 1], x_next) + p_list[k + 1]))
    return RiccatiSolution(dx=dx, du=du, mu=mu, P=P_list, p=p_list)


def stationarity_residuals(
    data: QpStageData,
    dx: Sequence[np.ndarray],
    du: Sequence[np.ndarray],
    mu: Sequence[np.ndarray],
    nu_l: Sequence[np.ndarray],
    nu_u: Sequence[np.ndarray],
) -> float:
    """Infinity norm of the QP Lagrangian gradient"""
    N = data.N
    worst = 0.0
    for k in range(N):
        st = data.stages[k]
        res_u = matmul_tn(st.M, dx[k]) + matmul(st.R, du[k]) + st.r - matmul_tn(st.B, mu[k]) - nu_l[k] + nu_u[k]
        worst = max(worst, float(np.max(np.abs(res_u), initial=0.0)))
        if k > 0:
            res_x = matmul(st.Q, dx[k]) + matmul(st.M, du[k]) + st.q - matmul_tn(st.A, mu[k]) + mu[k - 1]
            worst = max(worst, float(np.max(np.abs(res_x), initial=0.0)))
    res_n = matmul(np.atleast_2d(data.P_N), dx[N]) + data.p_N + mu[N - 1]
    return max(worst, float(np.max(np.abs(res_n), initial=0.0)))


def dynamics_residual(data: QpStageData, dx: Sequence[np.ndarray], du: Sequence[np.ndarray]) -> float:
    worst = float(np.max(np.abs(dx[0]), initial=0.0))
    for k, st in enumerate(data.stages):
        res = matmul(st.A, dx[k]) + matmul(st.B, du[k]) + st.b - dx[k + 1]
        worst = max(worst, float(np.max(np.abs(res), initial=0.0)))
    return worst
