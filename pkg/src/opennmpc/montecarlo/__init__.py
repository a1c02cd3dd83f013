from .closed_loop import ClosedLoopResult, SimulationOutcome, Trajectory, phi_metric, run_closed_loop
from .engine import (
    Comparison,
    McAggregate,
    RunRecord,
    compare_controllers,
    run_deterministic_reference,
    run_monte_carlo,
    scaling_benchmark,
)
from .scenario import Scenario
from .statistics import histogram, ocp_table, summarize_phi

__all__ = [
    "ClosedLoopResult",
    "Comparison",
    "McAggregate",
    "RunRecord",
    "Scenario",
    "SimulationOutcome",
    "Trajectory",
    "compare_controllers",
    "histogram",
    "ocp_table",
    "phi_metric",
    "run_closed_loop",
    "run_deterministic_reference",
    "run_monte_carlo",
    "scaling_benchmark",
    "summarize_phi",
]
