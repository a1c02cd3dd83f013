from .random_streams import MEASUREMENT_NOISE, PROCESS_NOISE, RandomStream
from .sde_system import (
    NoiseSpec,
    SdeModel,
    central_difference,
    euler_maruyama_step,
    measure,
    output,
    simulate_interval,
)

__all__ = [
    "MEASUREMENT_NOISE",
    "PROCESS_NOISE",
    "RandomStream",
    "NoiseSpec",
    "SdeModel",
    "central_difference",
    "euler_maruyama_step",
    "measure",
    "output",
    "simulate_interval",
]
