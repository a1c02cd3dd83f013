"""
PI controller with input bounds and anti-windup.

    e_k     = y_bar_k - y_k
    P_k     = kP e_k
    I_k     = I_hat_{k-1} + Ts kI e_k
    u_hat_k = u_bar + P_k + I_k
    u_k     = max(u_min, min(u_max, u_hat_k))
    I_aw_k  = Ts kaw (u_hat_k - u_k)
    I_hat_k = I_k + I_aw_k

Gains act on the internal units of the plant (K in, L/s out).
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple

import numpy as np

from opennmpc.controllers.base_controller import ControlStep, Controller
from opennmpc.ocp.setpoints import SetpointProfile


@dataclass(frozen=True)
class PiState:
    kP: float
    kI: float
    kaw: float
    Ts: float
    u_min: float
    u_max: float
    u_bar: float
    I_hat: float = 0.0

    def __post_init__(self):
        if not self.Ts > 0:
            raise ValueError(f"Ts must be positive, got {self.Ts}")
        if self.u_min > self.u_max:
            raise ValueError(f"u_min {self.u_min} exceeds u_max {self.u_max}")


@dataclass(frozen=True)
class PiTerms:
    e: float
    P: float
    I: float
    u_hat: float
    u: float
    I_aw: float


def pi_terms(state: PiState, y_k: float, y_bar_k: float) -> PiTerms:
    e = float(y_bar_k) - float(y_k)
    P = state.kP * e
    I = state.I_hat + state.Ts * state.kI * e
    u_hat = state.u_bar + P + I
    u = max(state.u_min, min(state.u_max, u_hat))
    I_aw = state.Ts * state.kaw * (u_hat - u)
    return PiTerms(e=e, P=P, I=I, u_hat=u_hat, u=u, I_aw=I_aw)


def pi_step(state: PiState, y_k: float, y_bar_k: float) -> Tuple[float, PiState]:
    """One PI sample. Pure: the new integrator state is returned, not stored."""
    terms = pi_terms(state, y_k, y_bar_k)
    return terms.u, replace(state, I_hat=terms.I + terms.I_aw)


class PiController(Controller):
    """Reactive reference controller; sees only the current setpoint.

    Gains, bounds and u_bar are in internal units (L/s out per K in), not the
    mL/min of the config surface.
    """
    name = "pi"

    def __init__(
        self,
        kP: float,
        kI: float,
        kaw: float,
        Ts: float,
        u_min: float,
        u_max: float,
        u_bar: Optional[float] = None,
        verbose: bool = False,
        logger_callback: Optional[Callable[[str], None]] = None,
    ):
        super().__init__(verbose=verbose, logger_callback=logger_callback)
        if u_bar is None:
            u_bar = 0.5 * (u_min + u_max)
        self.initial_state = PiState(kP=kP, kI=kI, kaw=kaw, Ts=Ts, u_min=u_min, u_max=u_max, u_bar=u_bar)
        self.state = self.initial_state

    def reset(self, t0: float) -> None:
        self.state = self.initial_state

    def step(self, t: float, y: np.ndarray, setpoint: SetpointProfile, d_seq: Optional[np.ndarray] = None) -> ControlStep:
        y_bar = setpoint.at(t)[0]
        terms = pi_terms(self.state, np.atleast_1d(y)[0], y_bar)
        u, self.state = pi_step(self.state, np.atleast_1d(y)[0], y_bar)
        self.stats["steps"] += 1
        if terms.u_hat != terms.u:
            self.stats["saturated_steps"] += 1
        return ControlStep(u=np.array([u]), extras={"e": terms.e, "I_hat": self.state.I_hat})
