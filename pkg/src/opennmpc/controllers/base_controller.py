from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from opennmpc.ocp.setpoints import SetpointProfile
from opennmpc.sqp.nlpsqp import SqpReport


@dataclass
class ControlStep:
    """Input applied at one sample plus what the controller knew when choosing it"""
    u: np.ndarray
    report: Optional[SqpReport] = None
    x_hat: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)


class Controller(ABC):
    """Abstract base class for closed-loop controllers"""
    name: str = "controller"

    def __init__(self, verbose: bool = False, logger_callback: Optional[Callable[[str], None]] = None):
        self.verbose = verbose
        self.log = logger_callback if logger_callback else (print if verbose else lambda _: None)
        self.stats = Counter()

    @abstractmethod
    def reset(self, t0: float) -> None:
        """Return to the initial controller state at time t0"""
        pass

    @abstractmethod
    def step(
        self,
        t: float,
        y: np.ndarray,
        setpoint: SetpointProfile,
        d_seq: Optional[np.ndarray] = None,
    ) -> ControlStep:
        """Compute the input for sample time t from measurement y"""
        pass
