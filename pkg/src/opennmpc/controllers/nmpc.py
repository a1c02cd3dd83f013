"""
NMPC: CD-EKF state estimation plus the output-tracking regulator OCP.

At sample t_i the controller
  1. filters y_i against the stored one-step prediction,
  2. solves the regulator NLP from x_hat_{i|i} with the announced setpoints,
  3. applies the first input u_i (clamped into the bounds),
  4. predicts the filter state to t_{i+1} with u_i.

The first measurement is filtered against the initial pair (x_hat_{-1|-1},
P_{-1|-1}) taken as the prediction at t_0.
"""

from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from opennmpc.controllers.base_controller import ControlStep, Controller
from opennmpc.errors import NumericalException
from opennmpc.estimation.cdekf import FilterState, filter_update, predict
from opennmpc.ocp.nlp import Horizon, NlpInstance, initial_guess
from opennmpc.ocp.setpoints import SetpointProfile
from opennmpc.sqp.nlpsqp import SqpReport, SqpStatus, sqp_solve
from opennmpc.sqp.options import SqpOptions
from opennmpc.system_sim.sde_system import SdeModel


@dataclass(frozen=True)
class NmpcSettings:
    """Controller model, horizon, bounds and solver options (internal units)"""
    model: SdeModel
    R: np.ndarray
    horizon: Horizon
    u_min: np.ndarray
    u_max: np.ndarray
    Qz: np.ndarray
    x_hat0: np.ndarray
    P0: float = 1e-6
    options: SqpOptions = SqpOptions()
    filter_steps: int = 5
    warm_start: bool = True
    x_scale: Optional[np.ndarray] = None
    u_scale: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "R", np.atleast_2d(np.asarray(self.R, dtype=np.float64)))
        object.__setattr__(self, "u_min", np.atleast_1d(np.asarray(self.u_min, dtype=np.float64)))
        object.__setattr__(self, "u_max", np.atleast_1d(np.asarray(self.u_max, dtype=np.float64)))
        object.__setattr__(self, "Qz", np.atleast_2d(np.asarray(self.Qz, dtype=np.float64)))
        object.__setattr__(self, "x_hat0", np.atleast_1d(np.asarray(self.x_hat0, dtype=np.float64)))
        if np.any(self.u_min > self.u_max):
            raise ValueError("u_min must not exceed u_max")
        if self.x_hat0.size != self.model.n_x:
            raise ValueError(f"x_hat0 has {self.x_hat0.size} entries, model has n_x={self.model.n_x}")


@dataclass(frozen=True)
class NmpcState:
    settings: NmpcSettings
    prediction: FilterState
    last_solution: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, settings: NmpcSettings, t0: float) -> 'NmpcState':
        return cls(settings=settings, prediction=FilterState.initial(t0, settings.x_hat0, settings.P0))


@dataclass
class NmpcDiagnostics:
    report: SqpReport
    x_hat: np.ndarray
    innovation: np.ndarray
    phi: float


def shift_solution(nlp: NlpInstance, xi: np.ndarray) -> np.ndarray:
    """Previous solution moved one stage forward, last stage repeated, inputs clipped"""
    lay = nlp.layout
    U, X = lay.split(xi)
    U = np.vstack([U[1:], U[-1:]])
    X = np.vstack([X[1:], X[-1:]])
    return nlp.clip_inputs(lay.pack(U, X))


def nmpc_step(
    state: NmpcState,
    t_i: float,
    y_i: np.ndarray,
    setpoints: np.ndarray,
    d_seq: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, NmpcState, NmpcDiagnostics]:
    """
    One NMPC sample.

    Args:
        state: Controller state holding the prediction at t_i.
        t_i: Sample time.
        y_i: Measurement at t_i.
        setpoints: N x n_z setpoints of the stages t_i + k*Ts, k = 1..N.
        d_seq: N x n_d disturbances over the horizon; zeros if omitted.

    Returns:
        (u_i, next state, diagnostics). Solver trouble never raises: the
        detected solution is applied and the status is in the report.
    """
    cfg = state.settings
    model = cfg.model
    N = cfg.horizon.N
    if d_seq is None:
        d_seq = np.zeros((N, model.n_d))
    y_i = np.atleast_1d(np.asarray(y_i, dtype=np.float64))
    if not np.all(np.isfinite(y_i)):
        raise ValueError(f"Measurement at t={t_i} is not finite: {y_i}")

    filtered, update = filter_update(state.prediction.x_hat, state.prediction.P, y_i, cfg.R, model, t=t_i)
    nlp = NlpInstance(
        horizon=cfg.horizon,
        model=model,
        x0=filtered.x_hat,
        u_min=cfg.u_min,
        u_max=cfg.u_max,
        d_seq=d_seq,
        setpoints=setpoints,
        Qz=cfg.Qz,
        t0=t_i,
        x_scale=cfg.x_scale,
        u_scale=cfg.u_scale,
    )

    if np.all(cfg.u_min == cfg.u_max):
        xi = initial_guess(nlp, cfg.u_min)
        report = SqpReport(status=SqpStatus.CONVERGED, iterations=0)
    else:
        if cfg.warm_start and state.last_solution is not None:
            xi0 = shift_solution(nlp, state.last_solution)
        else:
            xi0 = initial_guess(nlp)
        try:
            xi, _, report = sqp_solve(nlp, xi0, cfg.options)
        except NumericalException:
            xi = xi0
            report = SqpReport(status=SqpStatus.EVAL_FAILED)

    u_i = np.clip(xi[nlp.layout.u_slice(0)], cfg.u_min, cfg.u_max)
    prediction = predict(filtered, u_i, d_seq[0], t_i + cfg.horizon.Ts, model, n_steps=cfg.filter_steps)
    next_state = replace(state, prediction=prediction, last_solution=xi)
    diagnostics = NmpcDiagnostics(report=report, x_hat=filtered.x_hat, innovation=update.innovation, phi=report.objective)
    return u_i, next_state, diagnostics


class NmpcController(Controller):
    """
    Stateful wrapper around ``nmpc_step`` owned by one simulation.

    Solver outcomes are accumulated in ``self.stats`` (a Counter) and the
    final residuals of non-converged OCPs in ``self.unconverged``.
    """
    name = "nmpc"

    def __init__(
        self,
        settings: NmpcSettings,
        verbose: bool = False,
        logger_callback: Optional[Callable[[str], None]] = None,
    ):
        super().__init__(verbose=verbose, logger_callback=logger_callback)
        self.settings = settings
        self.state: Optional[NmpcState] = None
        self.unconverged: List[dict] = []
        self.max_sqp_iterations = 0

    def reset(self, t0: float) -> None:
        self.state = NmpcState.initial(self.settings, t0)
        self.unconverged = []

    def step(self, t: float, y: np.ndarray, setpoint: SetpointProfile, d_seq: Optional[np.ndarray] = None) -> ControlStep:
        if self.state is None:
            self.reset(t)
        horizon = self.settings.horizon
        u, self.state, diag = nmpc_step(self.state, t, y, setpoint.horizon(t, horizon.N, horizon.Ts), d_seq)
        self._record(t, diag.report)
        return ControlStep(u=u, report=diag.report, x_hat=diag.x_hat, extras={"innovation": diag.innovation})

    def _record(self, t: float, report: SqpReport) -> None:
        self.stats["ocps"] += 1
        self.stats[f"status_{report.status.value}"] += 1
        self.stats["sqp_iterations"] += report.iterations
        self.stats["qp_iterations"] += report.qp_iterations
        self.stats["hessian_resets"] += report.hessian_resets
        self.stats["line_search_exhaustions"] += report.line_search_exhaustions
        self.max_sqp_iterations = max(self.max_sqp_iterations, report.iterations)
        if not report.converged:
            self.stats["ocp_failures"] += 1
            self.unconverged.append({
                "t": t,
                "status": report.status.value,
                "stationarity": report.stationarity,
                "feasibility": report.feasibility,
            })
            self.log(
                f"OCP at t={t:.1f} ended with {report.status.value} after {report.iterations} iterations "
                f"(stationarity={report.stationarity:.3e}, feasibility={report.feasibility:.3e})"
            )
