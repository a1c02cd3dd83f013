from .config import (
    DEFAULTS_PATH,
    Config,
    ControllerConfig,
    ModelConfig,
    NoiseConfig,
    RunConfig,
    ScenarioConfig,
    SolverConfig,
    apply_env,
    deep_merge,
    load_config,
    load_defaults,
    parse_override,
)

__all__ = [
    "DEFAULTS_PATH",
    "Config",
    "ControllerConfig",
    "ModelConfig",
    "NoiseConfig",
    "RunConfig",
    "ScenarioConfig",
    "SolverConfig",
    "apply_env",
    "deep_merge",
    "load_config",
    "load_defaults",
    "parse_override",
]
