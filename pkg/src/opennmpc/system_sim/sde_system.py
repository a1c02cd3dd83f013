"""
Stochastic continuous-discrete systems and their simulation.

    dx(t) = f(t, x, u, d, p) dt + sigma(t, x, u, d, p) dw(t)
    y(t_i) = g(t_i, x(t_i), p) + v(t_i),   v ~ N(0, R)
    z(t)  = h(t, x(t), p)

Between samples u and d are held constant (zero-order hold). The state
equation is integrated with fixed-step Euler-Maruyama.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from opennmpc.errors import DimensionMismatchError, NonFiniteStateError, NotPositiveDefiniteError
from opennmpc.linalg.small import cholesky_factor, matmul
from opennmpc.system_sim.random_streams import RandomStream

DriftFn = Callable[[float, np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]
StaticFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


def _fd_step(x: np.ndarray) -> np.ndarray:
    return np.maximum(1e-6, 1e-6 * np.abs(x))


def central_difference(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    """Jacobian of fn at x by central differences, step max(1e-6, 1e-6*|x_j|)"""
    x = np.asarray(x, dtype=np.float64)
    steps = _fd_step(x)
    columns = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = steps[j]
        columns.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2.0 * steps[j]))
    if not columns:
        return np.zeros((np.asarray(fn(x)).size, 0))
    return np.column_stack(columns)


@dataclass(frozen=True)
class SdeModel:
    """Continuous-discrete stochastic model bundle.

    Immutable after construction and safe to share between simulations.
    Missing jacobians are replaced by central finite differences.
    """
    name: str
    n_x: int
    n_u: int
    n_d: int
    n_y: int
    n_z: int
    n_w: int
    drift: DriftFn
    diffusion: DriftFn
    measurement: StaticFn
    output: StaticFn
    params: np.ndarray = field(default_factory=lambda: np.zeros(0))
    drift_jacobian_x: Optional[DriftFn] = None
    drift_jacobian_u: Optional[DriftFn] = None
    measurement_jacobian_x: Optional[StaticFn] = None
    output_jacobian_x: Optional[StaticFn] = None

    def f(self, t: float, x: np.ndarray, u: np.ndarray, d: np.ndarray) -> np.ndarray:
        return np.asarray(self.drift(t, x, u, d, self.params), dtype=np.float64)

    def sigma(self, t: float, x: np.ndarray, u: np.ndarray, d: np.ndarray) -> np.ndarray:
        return np.asarray(self.diffusion(t, x, u, d, self.params), dtype=np.float64).reshape(self.n_x, self.n_w)

    def g(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.measurement(t, x, self.params), dtype=np.float64))

    def h(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.output(t, x, self.params), dtype=np.float64))

    def dfdx(self, t: float, x: np.ndarray, u: np.ndarray, d: np.ndarray) -> np.ndarray:
        if self.drift_jacobian_x is not None:
            return np.asarray(self.drift_jacobian_x(t, x, u, d, self.params), dtype=np.float64).reshape(self.n_x, self.n_x)
        return central_difference(lambda xx: self.f(t, xx, u, d), x)

    def dfdu(self, t: float, x: np.ndarray, u: np.ndarray, d: np.ndarray) -> np.ndarray:
        if self.drift_jacobian_u is not None:
            return np.asarray(self.drift_jacobian_u(t, x, u, d, self.params), dtype=np.float64).reshape(self.n_x, self.n_u)
        return central_difference(lambda uu: self.f(t, x, uu, d), np.asarray(u, dtype=np.float64))

    def dgdx(self, t: float, x: np.ndarray) -> np.ndarray:
        if self.measurement_jacobian_x is not None:
            return np.asarray(self.measurement_jacobian_x(t, x, self.params), dtype=np.float64).reshape(self.n_y, self.n_x)
        return central_difference(lambda xx: self.g(t, xx), x)

    def dhdx(self, t: float, x: np.ndarray) -> np.ndarray:
        if self.output_jacobian_x is not None:
            return np.asarray(self.output_jacobian_x(t, x, self.params), dtype=np.float64).reshape(self.n_z, self.n_x)
        return central_difference(lambda xx: self.h(t, xx), x)


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement covariance R (n_y x n_y) and Wiener dimension n_w"""
    R: np.ndarray
    n_w: int

    def __post_init__(self):
        r = np.atleast_2d(np.asarray(self.R, dtype=np.float64))
        if r.shape[0] != r.shape[1]:
            raise DimensionMismatchError(f"R must be square, got {r.shape}")
        if not np.allclose(r, r.T, rtol=1e-12, atol=0.0):
            raise DimensionMismatchError("R must be symmetric")
        object.__setattr__(self, "R", r)

    def measurement_factor(self) -> np.ndarray:
        """Cholesky factor of R; zero when R is zero (noise-free measurements)"""
        if not np.any(self.R):
            return np.zeros_like(self.R)
        try:
            return cholesky_factor(self.R)
        except NotPositiveDefiniteError:
            # semidefinite R: symmetric square root from the eigendecomposition
            eigvals, eigvecs = np.linalg.eigh(self.R)
            if eigvals.min() < -1e-12 * max(1.0, eigvals.max()):
                raise NotPositiveDefiniteError(
                    f"R has a negative eigenvalue {eigvals.min():.3e}", pivot_value=float(eigvals.min())
                )
            return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def check_finite(x: np.ndarray, t: float, what: str = "state") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteStateError(f"Non-finite {what} at t={t:.6g}: {x}", t=t)
    return x


def euler_maruyama_step(
    model: SdeModel,
    t: float,
    x: np.ndarray,
    u: np.ndarray,
    d: np.ndarray,
    dt: float,
    dw: np.ndarray,
) -> np.ndarray:
    """x + f(t,x,u,d,p)*dt + sigma(t,x,u,d,p) @ dW"""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    dw = np.asarray(dw, dtype=np.float64)
    if dw.shape != (model.n_w,):
        raise DimensionMismatchError(f"dW has shape {dw.shape}, model has n_w={model.n_w}")
    x_next = x + model.f(t, x, u, d) * dt + matmul(model.sigma(t, x, u, d), dw)
    return check_finite(x_next, t + dt)


def simulate_interval(
    model: SdeModel,
    t0: float,
    t1: float,
    x0: np.ndarray,
    u: np.ndarray,
    d: np.ndarray,
    n_steps: int,
    rng: Optional[RandomStream],
) -> np.ndarray:
    """
    Integrate the SDE over [t0, t1] with ``n_steps`` equal Euler-Maruyama steps.

    Args:
        model: Model to simulate.
        t0, t1: Interval end points, t1 > t0.
        x0: State at t0.
        u, d: Input and disturbance held over the interval.
        n_steps: Number of Euler-Maruyama steps (Ns >= 1).
        rng: Stream for the Wiener increments, one draw per step. ``None`` skips
            the diffusion term (deterministic explicit Euler).

    Returns:
        State at t1.
    """
    if not t1 > t0:
        raise ValueError(f"t1 must exceed t0, got [{t0}, {t1}]")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    dt = (t1 - t0) / n_steps
    sqrt_dt = np.sqrt(dt)
    x = np.array(x0, dtype=np.float64)
    zero_dw = np.zeros(model.n_w)
    for j in range(n_steps):
        dw = zero_dw if rng is None else sqrt_dt * rng.standard_normal(model.n_w)
        x = euler_maruyama_step(model, t0 + j * dt, x, u, d, dt, dw)
    return x


def measure(
    model: SdeModel,
    noise: NoiseSpec,
    t: float,
    x: np.ndarray,
    rng: Optional[RandomStream],
) -> np.ndarray:
    """y = g(t,x,p) + L_R zeta, zeta ~ N(0, I)"""
    check_finite(x, t)
    y = model.g(t, x)
    if rng is None or not np.any(noise.R):
        return y
    zeta = rng.standard_normal(model.n_y)
    return y + matmul(noise.measurement_factor(), zeta)


def output(model: SdeModel, t: float, x: np.ndarray) -> np.ndarray:
    """z = h(t,x,p)"""
    return model.h(t, x)
