from dataclasses import asdict, dataclass
from typing import Any, Dict

from opennmpc.errors import ConfigValidationError


@dataclass(frozen=True)
class SqpOptions:
    """Tolerances and limits of the SQP driver and its QP subproblem solver"""
    eps: float = 1e-6
    max_iter: int = 100
    c1: float = 1e-4
    beta_ls: float = 0.5
    s_max: float = 100.0
    max_backtracks: int = 30
    qp_tol: float = 1e-10
    qp_max_iter: int = 50

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigValidationError("solver.eps", f"must be positive, got {self.eps}")
        if self.max_iter < 1:
            raise ConfigValidationError("solver.max_iter", f"must be >= 1, got {self.max_iter}")
        if not 0.0 < self.c1 < 1.0:
            raise ConfigValidationError("solver.c1", f"must lie in (0, 1), got {self.c1}")
        if not 0.0 < self.beta_ls < 1.0:
            raise ConfigValidationError("solver.beta_ls", f"must lie in (0, 1), got {self.beta_ls}")
        if not self.s_max > 0:
            raise ConfigValidationError("solver.s_max", f"must be positive, got {self.s_max}")
        if self.max_backtracks < 0:
            raise ConfigValidationError("solver.max_backtracks", f"must be >= 0, got {self.max_backtracks}")
        if not self.qp_tol > 0:
            raise ConfigValidationError("solver.qp_tol", f"must be positive, got {self.qp_tol}")
        if self.qp_max_iter < 1:
            raise ConfigValidationError("solver.qp_max_iter", f"must be >= 1, got {self.qp_max_iter}")

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> 'SqpOptions':
        known = {k: v for k, v in values.items() if k in cls.__dataclass_fields__}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigValidationError(f"solver.{unknown[0]}", "unknown option")
        return cls(**known)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
