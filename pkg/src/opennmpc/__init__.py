from .config import Config, load_config
from .controllers import NmpcController, PiController, create_controller
from .errors import ConfigException, NumericalException, OpenNMPCException
from .montecarlo import (
    Scenario,
    compare_controllers,
    phi_metric,
    run_closed_loop,
    run_deterministic_reference,
    run_monte_carlo,
    scaling_benchmark,
)
from .sqp import SqpOptions, sqp_solve
from .qp import solve_qp

__all__ = [
    'Config',
    'load_config',
    'NmpcController',
    'PiController',
    'create_controller',
    'OpenNMPCException',
    'NumericalException',
    'ConfigException',
    'Scenario',
    'compare_controllers',
    'phi_metric',
    'run_closed_loop',
    'run_deterministic_reference',
    'run_monte_carlo',
    'scaling_benchmark',
    'SqpOptions',
    'sqp_solve',
    'solve_qp',
]
