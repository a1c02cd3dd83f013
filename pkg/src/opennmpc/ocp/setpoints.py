from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class SetpointProfile:
    """Piecewise-constant setpoint z_bar(t) given as (t_j, value_j) breakpoints.

    The value of breakpoint j holds on [t_j, t_{j+1}); before the first
    breakpoint the first value applies.
    """
    times: Tuple[float, ...]
    values: Tuple[Tuple[float, ...], ...]

    def __post_init__(self):
        if not self.times:
            raise ValueError("Setpoint profile needs at least one breakpoint")
        if len(self.times) != len(self.values):
            raise ValueError("Setpoint profile times and values differ in length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("Setpoint breakpoints must be strictly increasing in time")
        widths = {len(v) for v in self.values}
        if len(widths) != 1:
            raise ValueError("Setpoint values must all have the same dimension")

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence]) -> 'SetpointProfile':
        """[[t, value], ...] with scalar or vector values"""
        times = tuple(float(p[0]) for p in pairs)
        values = tuple(tuple(float(v) for v in np.atleast_1d(p[1])) for p in pairs)
        return cls(times=times, values=values)

    @classmethod
    def constant(cls, value) -> 'SetpointProfile':
        return cls.from_pairs([[0.0, value]])

    @property
    def n_z(self) -> int:
        return len(self.values[0])

    def at(self, t: float) -> np.ndarray:
        j = int(np.searchsorted(np.asarray(self.times), t, side="right")) - 1
        return np.asarray(self.values[max(j, 0)], dtype=np.float64)

    def sample(self, times: Sequence[float]) -> np.ndarray:
        """len(times) x n_z array of setpoint values"""
        return np.stack([self.at(t) for t in times]) if len(times) else np.zeros((0, self.n_z))

    def horizon(self, t_i: float, N: int, Ts: float) -> np.ndarray:
        """Setpoints of the stages t_i + k*Ts, k = 1..N"""
        return self.sample([t_i + k * Ts for k in range(1, N + 1)])

    def to_pairs(self) -> list:
        return [[t, list(v) if len(v) > 1 else v[0]] for t, v in zip(self.times, self.values)]
