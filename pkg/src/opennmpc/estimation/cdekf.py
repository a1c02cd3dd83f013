"""
Continuous-discrete extended Kalman filter.

Prediction integrates the mean and covariance ODEs

    dx/dt = f(t, x, u, d)
    dP/dt = A P + P A^T + sigma sigma^T,   A = df/dx

jointly with classical RK4 from the previous filtered pair. The measurement
update uses the Joseph stabilized form of the covariance update.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from opennmpc.errors import NotPositiveDefiniteError
from opennmpc.linalg.small import cholesky_factor, cholesky_solve, gemm, matmul, symmetrize
from opennmpc.system_sim.sde_system import SdeModel, check_finite


@dataclass(frozen=True)
class FilterState:
    t: float
    x_hat: np.ndarray
    P: np.ndarray

    @classmethod
    def initial(cls, t: float, x_hat, p0: float = 1e-6) -> 'FilterState':
        """Start value with P = p0 * I"""
        x = np.atleast_1d(np.asarray(x_hat, dtype=np.float64))
        return cls(t=t, x_hat=x, P=p0 * np.eye(x.size))


@dataclass(frozen=True)
class FilterUpdateReport:
    innovation: np.ndarray
    innovation_cov: np.ndarray
    gain: np.ndarray
    y_pred: np.ndarray
    C: np.ndarray


def _covariance_rate(model: SdeModel, t: float, x: np.ndarray, P: np.ndarray, u, d) -> np.ndarray:
    A = model.dfdx(t, x, u, d)
    sig = model.sigma(t, x, u, d)
    AP = gemm(1.0, A, False, P, False)
    return AP + AP.T + gemm(1.0, sig, False, sig, True)


def predict(
    fs: FilterState,
    u: np.ndarray,
    d: np.ndarray,
    t_next: float,
    model: SdeModel,
    n_steps: int = 5,
) -> FilterState:
    """
    One-step prediction from fs.t to t_next with n_steps RK4 steps.

    P is symmetrized after each step.
    """
    if not t_next > fs.t:
        raise ValueError(f"t_next must exceed the filter time {fs.t}, got {t_next}")
    h = (t_next - fs.t) / n_steps
    x = np.array(fs.x_hat, dtype=np.float64)
    P = np.array(fs.P, dtype=np.float64)
    t = fs.t
    for _ in range(n_steps):
        k1x = model.f(t, x, u, d)
        k1P = _covariance_rate(model, t, x, P, u, d)
        x2, P2 = x + 0.5 * h * k1x, P + 0.5 * h * k1P
        k2x = model.f(t + 0.5 * h, x2, u, d)
        k2P = _covariance_rate(model, t + 0.5 * h, x2, P2, u, d)
        x3, P3 = x + 0.5 * h * k2x, P + 0.5 * h * k2P
        k3x = model.f(t + 0.5 * h, x3, u, d)
        k3P = _covariance_rate(model, t + 0.5 * h, x3, P3, u, d)
        x4, P4 = x + h * k3x, P + h * k3P
        k4x = model.f(t + h, x4, u, d)
        k4P = _covariance_rate(model, t + h, x4, P4, u, d)
        x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        P = symmetrize(P + (h / 6.0) * (k1P + 2.0 * k2P + 2.0 * k3P + k4P))
        t = t + h
        check_finite(x, t, "state estimate")
        check_finite(P, t, "covariance")
    return FilterState(t=t_next, x_hat=x, P=P)


def filter_update(
    x_pred: np.ndarray,
    P_pred: np.ndarray,
    y: np.ndarray,
    R: np.ndarray,
    model: SdeModel,
    t: float = 0.0,
) -> Tuple[FilterState, FilterUpdateReport]:
    """
    Measurement update in Joseph form.

    Args:
        x_pred, P_pred: One-step prediction at the measurement time.
        y: Measurement.
        R: Measurement covariance.
        model: Model providing g and dg/dx.
        t: Measurement time, stored in the returned FilterState.

    Returns:
        (filtered state, report with innovation, its covariance, gain, y_pred and C).

    Raises:
        NotPositiveDefiniteError: R + C P C^T could not be factored.
    """
    x_pred = np.asarray(x_pred, dtype=np.float64)
    P_pred = np.atleast_2d(np.asarray(P_pred, dtype=np.float64))
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    y_pred = model.g(t, x_pred)
    C = model.dgdx(t, x_pred)
    e = np.atleast_1d(np.asarray(y, dtype=np.float64)) - y_pred

    CP = gemm(1.0, C, False, P_pred, False)
    R_e = symmetrize(gemm(1.0, CP, False, C, True, 1.0, R))
    try:
        L_e = cholesky_factor(R_e)
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(
            f"Innovation covariance not positive definite: {exc}", exc.pivot_index, exc.pivot_value
        ) from exc
    # K^T = R_e^{-1} C P  (R_e and P symmetric)
    K = cholesky_solve(L_e, CP).T

    x_filt = x_pred + matmul(K, e)
    I_KC = np.eye(x_pred.size) - gemm(1.0, K, False, C, False)
    P_joseph = gemm(1.0, gemm(1.0, I_KC, False, P_pred, False), False, I_KC, True)
    P_filt = symmetrize(gemm(1.0, gemm(1.0, K, False, R, False), False, K, True, 1.0, P_joseph))

    report = FilterUpdateReport(innovation=e, innovation_cov=R_e, gain=K, y_pred=y_pred, C=C)
    return FilterState(t=t, x_hat=x_filt, P=P_filt), report


def covariance_update_subtraction_form(P_pred: np.ndarray, report: FilterUpdateReport) -> np.ndarray:
    """P - K R_e K^T, the algebraically equal short form of the update"""
    K = report.gain
    return P_pred - gemm(1.0, gemm(1.0, K, False, report.innovation_cov, False), False, K, True)
