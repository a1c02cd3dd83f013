"""
Multiple-shooting transcription of the output-tracking regulator OCP.

    min  phi = sum_{k=1}^{N} ||h(x_k) - zbar_k||^2_Qz * Ts
    s.t. x_{k+1} - F(t_k, x_k, u_k, d_k) = 0,  k = 0..N-1
         u_min <= u_k <= u_max

x_0 is a parameter (the filtered estimate), so the decision vector is

    xi = [u_0, x_1, u_1, x_2, u_2, ..., x_{N-1}, u_{N-1}, x_N]

which groups into the Lagrangian Hessian blocks [u_0], [x_k, u_k] (k=1..N-1)
and [x_N]. F is Nc classical RK4 steps over one control interval; its
jacobians come from forward sensitivities through the same RK4 steps.

Constraint residuals use g_k = F_k - x_{k+1} (= b_k of the QP), and the QP
dynamics read dx_{k+1} = A_k dx_k + B_k du_k + b_k with A_k = dF_k/dx_k
(n_x x n_x) and B_k = dF_k/du_k (n_x x n_u) in their natural orientation.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from opennmpc.linalg.small import gemm, matmul_tn
from opennmpc.system_sim.sde_system import SdeModel, check_finite


@dataclass(frozen=True)
class Horizon:
    N: int
    Ts: float
    Nc: int = 5

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"Horizon N must be >= 1, got {self.N}")
        if not self.Ts > 0:
            raise ValueError(f"Ts must be positive, got {self.Ts}")
        if self.Nc < 1:
            raise ValueError(f"Nc must be >= 1, got {self.Nc}")


@dataclass(frozen=True)
class DecisionLayout:
    """Index bookkeeping for the stage-ordered decision vector"""
    N: int
    n_x: int
    n_u: int

    @property
    def size(self) -> int:
        return self.N * (self.n_x + self.n_u)

    def block_start(self, k: int) -> int:
        """Offset of Hessian block k: [u_0] for k=0, [x_k, u_k] for 0<k<N, [x_N] for k=N"""
        if k == 0:
            return 0
        return self.n_u + (k - 1) * (self.n_x + self.n_u)

    def block_slice(self, k: int) -> slice:
        start = self.block_start(k)
        if k == 0:
            return slice(0, self.n_u)
        if k == self.N:
            return slice(start, start + self.n_x)
        return slice(start, start + self.n_x + self.n_u)

    def x_slice(self, k: int) -> slice:
        """x_k for k = 1..N"""
        start = self.block_start(k)
        return slice(start, start + self.n_x)

    def u_slice(self, k: int) -> slice:
        """u_k for k = 0..N-1"""
        start = 0 if k == 0 else self.block_start(k) + self.n_x
        return slice(start, start + self.n_u)

    def u_index(self) -> np.ndarray:
        """Positions of all input components, stage order"""
        return np.concatenate([np.arange(self.u_slice(k).start, self.u_slice(k).stop) for k in range(self.N)])

    def split(self, xi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(U, X) with U[k] = u_k (k=0..N-1) and X[k] = x_{k+1}"""
        U = np.stack([xi[self.u_slice(k)] for k in range(self.N)])
        X = np.stack([xi[self.x_slice(k)] for k in range(1, self.N + 1)])
        return U, X

    def pack(self, U: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Inverse of split"""
        xi = np.zeros(self.size)
        U = np.asarray(U, dtype=np.float64).reshape(self.N, self.n_u)
        X = np.asarray(X, dtype=np.float64).reshape(self.N, self.n_x)
        for k in range(self.N):
            xi[self.u_slice(k)] = U[k]
            xi[self.x_slice(k + 1)] = X[k]
        return xi


@dataclass(frozen=True)
class NlpInstance:
    """One regulator NLP, built per NMPC step"""
    horizon: Horizon
    model: SdeModel
    x0: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    d_seq: np.ndarray
    setpoints: np.ndarray
    Qz: np.ndarray
    t0: float = 0.0
    x_scale: Optional[np.ndarray] = None  # nominal state magnitudes
    u_scale: Optional[np.ndarray] = None  # nominal input magnitudes

    def __post_init__(self):
        N = self.horizon.N
        for name, n in (("x_scale", self.model.n_x), ("u_scale", self.model.n_u)):
            value = getattr(self, name)
            if value is not None:
                value = np.broadcast_to(np.asarray(value, dtype=np.float64), (n,)).copy()
                if not np.all(value > 0.0):
                    raise ValueError(f"{name} must be positive, got {value}")
                object.__setattr__(self, name, value)
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=np.float64)))
        object.__setattr__(self, "u_min", np.atleast_1d(np.asarray(self.u_min, dtype=np.float64)))
        object.__setattr__(self, "u_max", np.atleast_1d(np.asarray(self.u_max, dtype=np.float64)))
        object.__setattr__(self, "Qz", np.atleast_2d(np.asarray(self.Qz, dtype=np.float64)))
        setpoints = np.asarray(self.setpoints, dtype=np.float64).reshape(N, self.model.n_z)
        object.__setattr__(self, "setpoints", setpoints)
        d_seq = np.asarray(self.d_seq, dtype=np.float64).reshape(N, self.model.n_d)
        object.__setattr__(self, "d_seq", d_seq)
        if np.any(self.u_min > self.u_max):
            raise ValueError("u_min must not exceed u_max")

    @property
    def layout(self) -> DecisionLayout:
        return DecisionLayout(self.horizon.N, self.model.n_x, self.model.n_u)

    def stage_time(self, k: int) -> float:
        return self.t0 + k * self.horizon.Ts

    def state(self, xi: np.ndarray, k: int) -> np.ndarray:
        return self.x0 if k == 0 else xi[self.layout.x_slice(k)]

    def variable_scale(self) -> Optional[np.ndarray]:
        """Per-entry scale of the decision vector; None when the NLP is unscaled"""
        if self.x_scale is None and self.u_scale is None:
            return None
        lay = self.layout
        scale = np.ones(lay.size)
        for k in range(self.horizon.N):
            if self.u_scale is not None:
                scale[lay.u_slice(k)] = self.u_scale
            if self.x_scale is not None:
                scale[lay.x_slice(k + 1)] = self.x_scale
        return scale

    def clip_inputs(self, xi: np.ndarray) -> np.ndarray:
        out = np.array(xi, dtype=np.float64)
        lay = self.layout
        for k in range(self.horizon.N):
            out[lay.u_slice(k)] = np.clip(out[lay.u_slice(k)], self.u_min, self.u_max)
        return out


@dataclass(frozen=True)
class ShootResult:
    F: np.ndarray
    dFdx: np.ndarray
    dFdu: np.ndarray


@dataclass(frozen=True)
class StageBlocks:
    A: np.ndarray
    B: np.ndarray
    b: np.ndarray


def integrate_rk4(model: SdeModel, t_k: float, x_k, u_k, d_k, horizon: Horizon) -> np.ndarray:
    """F only, no sensitivities (used on line-search trial points)"""
    h = horizon.Ts / horizon.Nc
    x = np.array(x_k, dtype=np.float64)
    t = t_k
    for _ in range(horizon.Nc):
        k1 = model.f(t, x, u_k, d_k)
        k2 = model.f(t + 0.5 * h, x + 0.5 * h * k1, u_k, d_k)
        k3 = model.f(t + 0.5 * h, x + 0.5 * h * k2, u_k, d_k)
        k4 = model.f(t + h, x + h * k3, u_k, d_k)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t + h
    return check_finite(x, t)


def shoot(model: SdeModel, t_k: float, x_k, u_k, d_k, horizon: Horizon) -> ShootResult:
    """
    Nc RK4 steps of dx/dt = f over [t_k, t_k + Ts] with forward sensitivities.

    Returns:
        ShootResult with F_k, dF/dx_k and dF/du_k (exact derivatives of the
        discrete RK4 map).
    """
    h = horizon.Ts / horizon.Nc
    n_x, n_u = model.n_x, model.n_u
    x = np.array(x_k, dtype=np.float64)
    u_k = np.atleast_1d(np.asarray(u_k, dtype=np.float64))
    Sx = np.eye(n_x)
    Su = np.zeros((n_x, n_u))
    t = t_k

    def stage(ts, xs, Sxs, Sus):
        A = model.dfdx(ts, xs, u_k, d_k)
        B = model.dfdu(ts, xs, u_k, d_k)
        return model.f(ts, xs, u_k, d_k), gemm(1.0, A, False, Sxs, False), gemm(1.0, A, False, Sus, False, 1.0, B)

    for _ in range(horizon.Nc):
        k1, k1x, k1u = stage(t, x, Sx, Su)
        k2, k2x, k2u = stage(t + 0.5 * h, x + 0.5 * h * k1, Sx + 0.5 * h * k1x, Su + 0.5 * h * k1u)
        k3, k3x, k3u = stage(t + 0.5 * h, x + 0.5 * h * k2, Sx + 0.5 * h * k2x, Su + 0.5 * h * k2u)
        k4, k4x, k4u = stage(t + h, x + h * k3, Sx + h * k3x, Su + h * k3u)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        Sx = Sx + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        Su = Su + (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        t = t + h
        check_finite(x, t)
    return ShootResult(F=x, dFdx=Sx, dFdu=Su)


def eval_objective(nlp: NlpInstance, xi: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Tracking objective and its gradient.

    The gradient is nonzero on the x_k slots only.
    """
    lay = nlp.layout
    Ts = nlp.horizon.Ts
    phi = 0.0
    grad = np.zeros(lay.size)
    for k in range(1, nlp.horizon.N + 1):
        t_k = nlp.stage_time(k)
        x_k = xi[lay.x_slice(k)]
        res = nlp.model.h(t_k, x_k) - nlp.setpoints[k - 1]
        weighted = nlp.Qz @ res
        phi += float(res @ weighted) * Ts
        grad[lay.x_slice(k)] = 2.0 * Ts * matmul_tn(nlp.model.dhdx(t_k, x_k), weighted)
    return phi, grad


def eval_objective_value(nlp: NlpInstance, xi: np.ndarray) -> float:
    lay = nlp.layout
    phi = 0.0
    for k in range(1, nlp.horizon.N + 1):
        res = nlp.model.h(nlp.stage_time(k), xi[lay.x_slice(k)]) - nlp.setpoints[k - 1]
        phi += float(res @ (nlp.Qz @ res)) * nlp.horizon.Ts
    return phi


def eval_constraints(nlp: NlpInstance, xi: np.ndarray) -> Tuple[np.ndarray, List[StageBlocks]]:
    """
    Stage-ordered residuals g_k = F_k - x_{k+1} and the blocks (A_k, B_k, b_k).

    g is zero exactly when xi is a dynamically feasible trajectory from x0.
    """
    lay = nlp.layout
    blocks: List[StageBlocks] = []
    for k in range(nlp.horizon.N):
        res = shoot(nlp.model, nlp.stage_time(k), nlp.state(xi, k), xi[lay.u_slice(k)], nlp.d_seq[k], nlp.horizon)
        b = res.F - xi[lay.x_slice(k + 1)]
        blocks.append(StageBlocks(A=res.dFdx, B=res.dFdu, b=b))
    g = np.concatenate([blk.b for blk in blocks])
    return g, blocks


def eval_constraint_residual(nlp: NlpInstance, xi: np.ndarray) -> np.ndarray:
    """g without jacobians"""
    lay = nlp.layout
    parts = []
    for k in range(nlp.horizon.N):
        F = integrate_rk4(nlp.model, nlp.stage_time(k), nlp.state(xi, k), xi[lay.u_slice(k)], nlp.d_seq[k], nlp.horizon)
        parts.append(F - xi[lay.x_slice(k + 1)])
    return np.concatenate(parts)


def constraint_jacobian_transpose_product(nlp: NlpInstance, blocks: List[StageBlocks], lam: np.ndarray) -> np.ndarray:
    """(dg/dxi)^T lam assembled from the stage blocks"""
    lay = nlp.layout
    n_x = nlp.model.n_x
    out = np.zeros(lay.size)
    for k, blk in enumerate(blocks):
        lam_k = lam[k * n_x:(k + 1) * n_x]
        if k > 0:
            out[lay.x_slice(k)] += matmul_tn(blk.A, lam_k)
        out[lay.u_slice(k)] += matmul_tn(blk.B, lam_k)
        out[lay.x_slice(k + 1)] -= lam_k
    return out


def forward_simulate(nlp: NlpInstance, U: np.ndarray) -> np.ndarray:
    """Decision vector of the trajectory obtained by shooting U from x0"""
    lay = nlp.layout
    U = np.asarray(U, dtype=np.float64).reshape(nlp.horizon.N, nlp.model.n_u)
    X = np.zeros((nlp.horizon.N, nlp.model.n_x))
    x = nlp.x0
    for k in range(nlp.horizon.N):
        x = integrate_rk4(nlp.model, nlp.stage_time(k), x, U[k], nlp.d_seq[k], nlp.horizon)
        X[k] = x
    return lay.pack(U, X)


def dense_constraint_jacobian(nlp: NlpInstance, blocks: List[StageBlocks]) -> np.ndarray:
    """Dense dg/dxi, for checks and small problems"""
    lay = nlp.layout
    n_x = nlp.model.n_x
    J = np.zeros((nlp.horizon.N * n_x, lay.size))
    for k, blk in enumerate(blocks):
        rows = slice(k * n_x, (k + 1) * n_x)
        if k > 0:
            J[rows, lay.x_slice(k)] = blk.A
        J[rows, lay.u_slice(k)] = blk.B
        J[rows, lay.x_slice(k + 1)] = -np.eye(n_x)
    return J


def initial_guess(nlp: NlpInstance, u_guess: Optional[np.ndarray] = None) -> np.ndarray:
    """Cold start: constant input (clipped into bounds) shot forward from x0"""
    if u_guess is None:
        finite = np.isfinite(nlp.u_min) & np.isfinite(nlp.u_max)
        u_guess = np.where(finite, 0.5 * (np.where(finite, nlp.u_min, 0.0) + np.where(finite, nlp.u_max, 0.0)), 0.0)
    u = np.clip(np.atleast_1d(u_guess), nlp.u_min, nlp.u_max)
    return forward_simulate(nlp, np.tile(u, (nlp.horizon.N, 1)))
