from .interior_point import QpSolution, QpStatus, solve_qp
from .riccati import (
    QpStage,
    QpStageData,
    RiccatiSolution,
    dynamics_residual,
    riccati_factor_solve,
    stationarity_residuals,
)

__all__ = [
    "QpSolution",
    "QpStage",
    "QpStageData",
    "QpStatus",
    "RiccatiSolution",
    "dynamics_residual",
    "riccati_factor_solve",
    "solve_qp",
    "stationarity_residuals",
]
