from .bfgs import BfgsStatus, HessianUpdate, bfgs_block_update, dense_hessian, identity_blocks, update_hessian_blocks
from .merit import LineSearchResult, backtrack, line_search, merit_directional_derivative, merit_value, merit_weights_update
from .nlpsqp import (
    SqpMultipliers,
    SqpReport,
    SqpState,
    SqpStatus,
    build_qp,
    check_convergence,
    convergence_scale,
    lagrangian_gradient,
    scaled_kkt_residuals,
    sqp_solve,
)
from .options import SqpOptions

__all__ = [
    "BfgsStatus",
    "HessianUpdate",
    "LineSearchResult",
    "SqpMultipliers",
    "SqpOptions",
    "SqpReport",
    "SqpState",
    "SqpStatus",
    "backtrack",
    "bfgs_block_update",
    "build_qp",
    "check_convergence",
    "convergence_scale",
    "dense_hessian",
    "identity_blocks",
    "lagrangian_gradient",
    "line_search",
    "merit_directional_derivative",
    "merit_value",
    "merit_weights_update",
    "scaled_kkt_residuals",
    "sqp_solve",
    "update_hessian_blocks",
]
