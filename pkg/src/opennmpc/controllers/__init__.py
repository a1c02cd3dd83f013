from .base_controller import ControlStep, Controller
from .factory import create_controller
from .nmpc import NmpcController, NmpcDiagnostics, NmpcSettings, NmpcState, nmpc_step, shift_solution
from .pi import PiController, PiState, PiTerms, pi_step, pi_terms

__all__ = [
    "ControlStep",
    "Controller",
    "NmpcController",
    "NmpcDiagnostics",
    "NmpcSettings",
    "NmpcState",
    "PiController",
    "PiState",
    "PiTerms",
    "create_controller",
    "nmpc_step",
    "pi_step",
    "pi_terms",
    "shift_solution",
]
