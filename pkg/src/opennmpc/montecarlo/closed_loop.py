import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Generic, List, Optional, TypeVar

import numpy as np

from opennmpc.errors import LengthMismatchError, OpenNMPCException
from opennmpc.montecarlo.scenario import Scenario
from opennmpc.system_sim.random_streams import MEASUREMENT_NOISE, PROCESS_NOISE, RandomStream
from opennmpc.system_sim.sde_system import measure, output, simulate_interval

T = TypeVar('T')


class SimulationOutcome(Generic[T]):
    """Container for one simulation's result with error handling"""
    def __init__(self, sim_index: int, data: Optional[T] = None, error: Optional[str] = None, error_type: str = ""):
        self.sim_index = sim_index
        self.data = data
        self.error = error
        self.error_type = error_type
        self.success = error is None

    @property
    def failed(self) -> bool:
        return not self.success


@dataclass
class Trajectory:
    """Sampled closed-loop signals at t_0..t_f; u is NaN at t_f (no input computed)"""
    t: np.ndarray
    z: np.ndarray
    zbar: np.ndarray
    u: np.ndarray
    y: np.ndarray

    def columns(self, stride: int = 1) -> Dict[str, np.ndarray]:
        sl = slice(None, None, max(1, int(stride)))
        return {
            "t": self.t[sl],
            "z": self.z[sl, 0],
            "zbar": self.zbar[sl, 0],
            "u": self.u[sl, 0],
            "y": self.y[sl, 0],
        }


@dataclass
class ClosedLoopResult:
    sim_index: int
    seed: int
    controller: str
    phi: float
    n_ocps: int = 0
    ocp_failures: int = 0
    stats: Dict[str, int] = field(default_factory=dict)
    max_sqp_iterations: int = 0
    unconverged: List[dict] = field(default_factory=list)
    wall_time: float = 0.0
    trajectory: Optional[Trajectory] = None


def phi_metric(z, z_bar) -> float:
    """
    Mean squared tracking error over the sample points,
    (1/(n+1)) sum_i ||z(t_i) - z_bar(t_i)||^2.

    Raises:
        LengthMismatchError: the sequences differ in length or are empty.
    """
    z = np.asarray(z, dtype=np.float64)
    z_bar = np.asarray(z_bar, dtype=np.float64)
    if z.shape[0] != z_bar.shape[0]:
        raise LengthMismatchError(f"z has {z.shape[0]} samples, z_bar has {z_bar.shape[0]}")
    if z.shape[0] == 0:
        raise LengthMismatchError("phi needs at least one sample")
    res = (z - z_bar).reshape(z.shape[0], -1)
    return float(np.sum(res * res) / z.shape[0])


def run_closed_loop(
    scenario: Scenario,
    sim_index: int,
    keep_trajectory: bool = True,
    verbose: bool = False,
    logger_callback: Optional[Callable[[str], None]] = None,
) -> SimulationOutcome[ClosedLoopResult]:
    """
    Simulate one closed loop of the scenario.

    Each interval measures the truth state, asks the controller for u_i and
    integrates the truth SDE over [t_i, t_{i+1}] with Ns Euler-Maruyama steps.
    Noise comes from streams keyed by (seed, sim_index, channel), so the run
    does not depend on which worker executes it.

    Returns:
        SimulationOutcome; numerical breakdowns are recorded as a failed run
        instead of raised.
    """
    start = time.perf_counter()
    cfg = scenario.config
    Ts, Ns = cfg.scenario.Ts, cfg.scenario.Ns
    try:
        truth = scenario.truth_model()
        noise = scenario.noise_spec()
        controller = scenario.build_controller(verbose=verbose, logger_callback=logger_callback)
        times = scenario.sample_times()
        n = scenario.n_samples
        process_rng = None if scenario.deterministic else RandomStream(scenario.seed, sim_index, PROCESS_NOISE, scenario.stream_tag)
        measurement_rng = None if scenario.deterministic else RandomStream(scenario.seed, sim_index, MEASUREMENT_NOISE, scenario.stream_tag)

        z = np.zeros((n + 1, truth.n_z))
        zbar = scenario.setpoints.sample(times)
        u_hist = np.full((n + 1, truth.n_u), np.nan)
        y_hist = np.zeros((n + 1, truth.n_y))
        d = np.zeros(truth.n_d)
        x = scenario.x0()
        controller.reset(float(times[0]))

        for i in range(n):
            t_i = float(times[i])
            y_hist[i] = measure(truth, noise, t_i, x, measurement_rng)
            z[i] = output(truth, t_i, x)
            step = controller.step(t_i, y_hist[i], scenario.setpoints)
            u_hist[i] = step.u
            x = simulate_interval(truth, t_i, float(times[i + 1]), x, step.u, d, Ns, process_rng)
        y_hist[n] = measure(truth, noise, float(times[n]), x, measurement_rng)
        z[n] = output(truth, float(times[n]), x)
        phi = phi_metric(z, zbar)
    except (OpenNMPCException, ArithmeticError) as exc:
        return SimulationOutcome(sim_index, error=str(exc), error_type=type(exc).__name__)

    stats = dict(controller.stats)
    result = ClosedLoopResult(
        sim_index=sim_index,
        seed=scenario.seed,
        controller=scenario.controller_type,
        phi=phi,
        n_ocps=stats.get("ocps", 0),
        ocp_failures=stats.get("ocp_failures", 0),
        stats=stats,
        max_sqp_iterations=getattr(controller, "max_sqp_iterations", 0),
        unconverged=list(getattr(controller, "unconverged", [])),
        wall_time=time.perf_counter() - start,
        trajectory=Trajectory(t=times, z=z, zbar=zbar, u=u_hist, y=y_hist) if keep_trajectory else None,
    )
    return SimulationOutcome(sim_index, data=result)
