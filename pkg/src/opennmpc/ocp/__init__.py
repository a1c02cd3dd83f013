from .nlp import (
    DecisionLayout,
    Horizon,
    NlpInstance,
    ShootResult,
    StageBlocks,
    constraint_jacobian_transpose_product,
    dense_constraint_jacobian,
    eval_constraint_residual,
    eval_constraints,
    eval_objective,
    eval_objective_value,
    forward_simulate,
    initial_guess,
    integrate_rk4,
    shoot,
)
from .setpoints import SetpointProfile

__all__ = [
    "DecisionLayout",
    "Horizon",
    "NlpInstance",
    "ShootResult",
    "SetpointProfile",
    "StageBlocks",
    "constraint_jacobian_transpose_product",
    "dense_constraint_jacobian",
    "eval_constraint_residual",
    "eval_constraints",
    "eval_objective",
    "eval_objective_value",
    "forward_simulate",
    "initial_guess",
    "integrate_rk4",
    "shoot",
]
