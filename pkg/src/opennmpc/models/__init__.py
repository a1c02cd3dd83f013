from .cstr import (
    ML_PER_MIN_TO_L_PER_S,
    CstrParams,
    CstrVariant,
    StoichConfig,
    build_cstr_model,
    cstr_diffusion,
    cstr_drift,
    initial_state,
    reaction_rate,
    reduced_concentrations,
    stoich_config,
)

__all__ = [
    "ML_PER_MIN_TO_L_PER_S",
    "CstrParams",
    "CstrVariant",
    "StoichConfig",
    "build_cstr_model",
    "cstr_diffusion",
    "cstr_drift",
    "initial_state",
    "reaction_rate",
    "reduced_concentrations",
    "stoich_config",
]
