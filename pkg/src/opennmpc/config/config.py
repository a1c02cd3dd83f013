"""
Sectioned experiment configuration.

A config file is TOML (or a JSON echo written by a previous run). It is deep
merged over the packaged ``defaults.toml`` and turned into typed, validated
sections. ``Config.to_dict()`` is the effective config echoed into every
output file, and loading that echo gives back an equal Config.
"""

import copy
import json
import os
import re
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from opennmpc.errors import ConfigParseError, ConfigValidationError
from opennmpc.models.cstr import ML_PER_MIN_TO_L_PER_S, CstrParams, CstrVariant, initial_state
from opennmpc.ocp.setpoints import SetpointProfile
from opennmpc.sqp.options import SqpOptions

DEFAULTS_PATH = Path(__file__).with_name("defaults.toml")
SECTIONS = ("model", "noise", "controller", "solver", "scenario", "run")

SolverConfig = SqpOptions
BIN_RULES = ("auto", "fd", "doane", "scott", "stone", "rice", "sturges", "sqrt")


def _require(condition: bool, field_name: str, message: str) -> None:
    if not condition:
        raise ConfigValidationError(field_name, message)


def _number(section: Dict[str, Any], key: str, prefix: str) -> float:
    value = section.get(key)
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), f"{prefix}.{key}", f"must be a number, got {value!r}")
    _require(np.isfinite(value), f"{prefix}.{key}", "must be finite")
    return float(value)


def _integer(section: Dict[str, Any], key: str, prefix: str, minimum: int = 0) -> int:
    value = section.get(key)
    _require(isinstance(value, int) and not isinstance(value, bool), f"{prefix}.{key}", f"must be an integer, got {value!r}")
    _require(value >= minimum, f"{prefix}.{key}", f"must be >= {minimum}, got {value}")
    return int(value)


def _check_keys(section: Dict[str, Any], allowed: Sequence[str], prefix: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigValidationError(f"{prefix}.{unknown[0]}", "unknown key")


@dataclass(frozen=True)
class ModelConfig:
    """CSTR parameters (flows already in L/s) and the model variants"""
    params: CstrParams
    truth_variant: CstrVariant = CstrVariant.THREE_STATE
    controller_variant: CstrVariant = CstrVariant.ONE_STATE
    F_range: Tuple[float, float] = (0.0, 1000.0)  # mL/min, as configured

    KEYS = ("truth_variant", "controller_variant", "V", "k0", "EaR", "beta", "cA_in", "cB_in", "cT_in",
            "sigmaA", "sigmaB", "sigmaT", "F_range")

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'ModelConfig':
        _check_keys(d, cls.KEYS, "model")
        variants = {}
        for key in ("truth_variant", "controller_variant"):
            try:
                variants[key] = CstrVariant(d.get(key))
            except ValueError:
                raise ConfigValidationError(f"model.{key}", f"must be one of {[v.value for v in CstrVariant]}, got {d.get(key)!r}")
        F_range = d.get("F_range")
        _require(isinstance(F_range, list) and len(F_range) == 2, "model.F_range", "must be [u_min, u_max] in mL/min")
        _require(all(isinstance(v, (int, float)) for v in F_range), "model.F_range", "entries must be numbers")
        _require(F_range[0] <= F_range[1], "model.F_range", f"u_min {F_range[0]} exceeds u_max {F_range[1]}")
        values = {k: _number(d, k, "model") for k in ("V", "k0", "EaR", "beta", "cA_in", "cB_in", "cT_in", "sigmaA", "sigmaB", "sigmaT")}
        _require(values["V"] > 0, "model.V", "must be positive")
        _require(values["k0"] > 0, "model.k0", "must be positive")
        _require(values["EaR"] >= 0, "model.EaR", "must be non-negative")
        _require(values["beta"] != 0, "model.beta", "must be nonzero")
        _require(values["cT_in"] > 0, "model.cT_in", "must be positive")
        for key in ("sigmaA", "sigmaB", "sigmaT"):
            _require(values[key] >= 0, f"model.{key}", "must be non-negative")
        params = CstrParams.from_ml_per_min((float(F_range[0]), float(F_range[1])), **values)
        return cls(params=params, F_range=(float(F_range[0]), float(F_range[1])), **variants)

    def to_dict(self) -> Dict[str, Any]:
        p = self.params
        return {
            "truth_variant": self.truth_variant.value,
            "controller_variant": self.controller_variant.value,
            "V": p.V, "k0": p.k0, "EaR": p.EaR, "beta": p.beta,
            "cA_in": p.cA_in, "cB_in": p.cB_in, "cT_in": p.cT_in,
            "sigmaA": p.sigmaA, "sigmaB": p.sigmaB, "sigmaT": p.sigmaT,
            "F_range": list(self.F_range),
        }


@dataclass(frozen=True)
class NoiseConfig:
    R: Tuple[Tuple[float, ...], ...]
    process_scale: float = 1.0

    KEYS = ("R", "process_scale")

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'NoiseConfig':
        _check_keys(d, cls.KEYS, "noise")
        raw = d.get("R")
        try:
            R = np.atleast_2d(np.asarray(raw, dtype=np.float64))
        except (TypeError, ValueError):
            raise ConfigValidationError("noise.R", f"must be a number or a square matrix, got {raw!r}")
        _require(R.ndim == 2 and R.shape[0] == R.shape[1], "noise.R", f"must be square, got shape {R.shape}")
        _require(bool(np.all(np.isfinite(R))), "noise.R", "must be finite")
        _require(np.allclose(R, R.T), "noise.R", "must be symmetric")
        _require(bool(np.all(np.linalg.eigvalsh(R) >= -1e-12)), "noise.R", "must be positive semidefinite")
        scale = _number(d, "process_scale", "noise")
        _require(scale >= 0, "noise.process_scale", "must be non-negative")
        return cls(R=tuple(tuple(row) for row in R.tolist()), process_scale=scale)

    @property
    def R_matrix(self) -> np.ndarray:
        return np.array(self.R, dtype=np.float64)

    def to_dict(self) -> Dict[str, Any]:
        R: Union[float, List[List[float]]] = self.R[0][0] if len(self.R) == 1 else [list(r) for r in self.R]
        return {"R": R, "process_scale": self.process_scale}


@dataclass(frozen=True)
class ControllerConfig:
    type: str = "nmpc"
    N: int = 60
    Nc: int = 5
    Qz: float = 1.0
    P0: float = 1e-6
    filter_steps: int = 5
    warm_start: bool = True
    scale_variables: bool = True
    kP: float = -1e-3
    kI: float = -1e-4
    kaw: float = -0.1
    u_bar: Optional[float] = None  # mL/min; midpoint of F_range when omitted
    x_hat0: Optional[Tuple[float, ...]] = None  # mol; C_in V of the controller model when omitted

    KEYS = ("type", "N", "Nc", "Qz", "P0", "filter_steps", "warm_start", "scale_variables", "kP", "kI", "kaw", "u_bar", "x_hat0")

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'ControllerConfig':
        _check_keys(d, cls.KEYS, "controller")
        kind = d.get("type")
        _require(kind in ("nmpc", "pi"), "controller.type", f"must be 'nmpc' or 'pi', got {kind!r}")
        warm = d.get("warm_start")
        _require(isinstance(warm, bool), "controller.warm_start", "must be true or false")
        scaled = d.get("scale_variables", True)
        _require(isinstance(scaled, bool), "controller.scale_variables", "must be true or false")
        P0 = _number(d, "P0", "controller")
        _require(P0 > 0, "controller.P0", "must be positive")
        Qz = _number(d, "Qz", "controller")
        _require(Qz >= 0, "controller.Qz", "must be non-negative")
        u_bar = _number(d, "u_bar", "controller") if "u_bar" in d else None
        x_hat0 = None
        if "x_hat0" in d:
            x_hat0 = tuple(float(v) for v in np.atleast_1d(d["x_hat0"]))
        return cls(
            type=kind,
            N=_integer(d, "N", "controller", 1),
            Nc=_integer(d, "Nc", "controller", 1),
            Qz=Qz,
            P0=P0,
            filter_steps=_integer(d, "filter_steps", "controller", 1),
            warm_start=warm,
            scale_variables=scaled,
            kP=_number(d, "kP", "controller"),
            kI=_number(d, "kI", "controller"),
            kaw=_number(d, "kaw", "controller"),
            u_bar=u_bar,
            x_hat0=x_hat0,
        )

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        if self.u_bar is None:
            out.pop("u_bar")
        if self.x_hat0 is None:
            out.pop("x_hat0")
        else:
            out["x_hat0"] = list(self.x_hat0)
        return out


@dataclass(frozen=True)
class ScenarioConfig:
    t0: float
    tf: float
    Ts: float
    Ns: int
    setpoints: SetpointProfile
    seed: int
    paired_seeds: bool = True
    x0: Optional[Tuple[float, ...]] = None  # mol; C_in V of the truth model when omitted

    KEYS = ("t0", "tf", "Ts", "Ns", "setpoints", "seed", "paired_seeds", "x0")

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'ScenarioConfig':
        _check_keys(d, cls.KEYS, "scenario")
        t0 = _number(d, "t0", "scenario")
        tf = _number(d, "tf", "scenario")
        Ts = _number(d, "Ts", "scenario")
        _require(tf > t0, "scenario.tf", f"must exceed t0={t0}, got {tf}")
        _require(Ts > 0, "scenario.Ts", "must be positive")
        steps = (tf - t0) / Ts
        _require(abs(steps - round(steps)) <= 1e-9 * max(1.0, steps), "scenario.Ts",
                 f"(tf - t0)/Ts = {steps} must be an integer number of samples")
        paired = d.get("paired_seeds")
        _require(isinstance(paired, bool), "scenario.paired_seeds", "must be true or false")
        try:
            setpoints = SetpointProfile.from_pairs(d.get("setpoints"))
        except (TypeError, ValueError, IndexError) as exc:
            raise ConfigValidationError("scenario.setpoints", f"must be [[t, value], ...] with increasing t: {exc}")
        x0 = tuple(float(v) for v in np.atleast_1d(d["x0"])) if "x0" in d else None
        return cls(
            t0=t0, tf=tf, Ts=Ts,
            Ns=_integer(d, "Ns", "scenario", 1),
            setpoints=setpoints,
            seed=_integer(d, "seed", "scenario", 0),
            paired_seeds=paired,
            x0=x0,
        )

    @property
    def n_samples(self) -> int:
        """Number of control intervals (tf - t0)/Ts"""
        return int(round((self.tf - self.t0) / self.Ts))

    def sample_times(self) -> np.ndarray:
        return self.t0 + self.Ts * np.arange(self.n_samples + 1)

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "t0": self.t0, "tf": self.tf, "Ts": self.Ts, "Ns": self.Ns,
            "setpoints": self.setpoints.to_pairs(),
            "seed": self.seed, "paired_seeds": self.paired_seeds,
        }
        if self.x0 is not None:
            out["x0"] = list(self.x0)
        return out


@dataclass(frozen=True)
class RunConfig:
    n_sims: int = 100
    workers: int = 1
    out_dir: str = "results"
    save_trajectories: bool = False
    trajectory_stride: int = 1
    bins: Union[str, int] = "fd"
    worker_counts: Tuple[int, ...] = (1, 2, 4, 8)

    KEYS = ("n_sims", "workers", "out_dir", "save_trajectories", "trajectory_stride", "bins", "worker_counts")

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'RunConfig':
        _check_keys(d, cls.KEYS, "run")
        save = d.get("save_trajectories")
        _require(isinstance(save, bool), "run.save_trajectories", "must be true or false")
        bins = d.get("bins")
        _require((isinstance(bins, str) and bins in BIN_RULES) or
                 (isinstance(bins, int) and not isinstance(bins, bool) and bins >= 1),
                 "run.bins", f"must be a positive integer or a numpy bin rule name, got {bins!r}")
        counts = d.get("worker_counts")
        _require(isinstance(counts, list) and len(counts) > 0 and all(isinstance(c, int) and c >= 1 for c in counts),
                 "run.worker_counts", "must be a non-empty list of positive integers")
        out_dir = d.get("out_dir")
        _require(isinstance(out_dir, str) and out_dir != "", "run.out_dir", "must be a non-empty path")
        return cls(
            n_sims=_integer(d, "n_sims", "run", 1),
            workers=_integer(d, "workers", "run", 1),
            out_dir=out_dir,
            save_trajectories=save,
            trajectory_stride=_integer(d, "trajectory_stride", "run", 1),
            bins=bins,
            worker_counts=tuple(counts),
        )

    @classmethod
    def from_env(cls, base: Optional['RunConfig'] = None) -> 'RunConfig':
        """Apply OPENNMPC_WORKERS and OPENNMPC_OUT_DIR overrides"""
        base = base or cls()
        updates: Dict[str, Any] = {}
        workers = os.getenv("OPENNMPC_WORKERS")
        if workers:
            try:
                updates["workers"] = int(workers)
            except ValueError:
                raise ConfigValidationError("run.workers", f"OPENNMPC_WORKERS must be an integer, got {workers!r}")
            _require(updates["workers"] >= 1, "run.workers", "OPENNMPC_WORKERS must be >= 1")
        out_dir = os.getenv("OPENNMPC_OUT_DIR")
        if out_dir:
            updates["out_dir"] = out_dir
        return replace(base, **updates) if updates else base

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["worker_counts"] = list(self.worker_counts)
        return out


@dataclass(frozen=True)
class Config:
    model: ModelConfig
    noise: NoiseConfig
    controller: ControllerConfig
    solver: SqpOptions
    scenario: ScenarioConfig
    run: RunConfig
    source: str = field(default="", compare=False)

    @classmethod
    def from_dict(cls, d: Dict[str, Any], source: str = "") -> 'Config':
        unknown = sorted(set(d) - set(SECTIONS) - {"config_version"})
        if unknown:
            raise ConfigValidationError(unknown[0], "unknown section")
        for name in SECTIONS:
            if not isinstance(d.get(name, {}), dict):
                raise ConfigValidationError(name, "must be a table")
        config = cls(
            model=ModelConfig.from_dict(d.get("model", {})),
            noise=NoiseConfig.from_dict(d.get("noise", {})),
            controller=ControllerConfig.from_dict(d.get("controller", {})),
            solver=SqpOptions.from_dict(d.get("solver", {})),
            scenario=ScenarioConfig.from_dict(d.get("scenario", {})),
            run=RunConfig.from_dict(d.get("run", {})),
            source=source,
        )
        config._validate_cross_fields()
        return config

    def _validate_cross_fields(self) -> None:
        R = self.noise.R_matrix
        _require(R.shape == (1, 1), "noise.R", f"the CSTR measures one output, R must be 1x1, got {R.shape}")
        _require(self.scenario.setpoints.n_z == 1, "scenario.setpoints", "the CSTR has one output, setpoints must be scalars")
        p = self.model.params
        if self.controller.u_bar is not None:
            u_bar = self.controller.u_bar * ML_PER_MIN_TO_L_PER_S
            _require(p.u_min <= u_bar <= p.u_max, "controller.u_bar", "must lie inside model.F_range")
        n_truth = initial_state(p, self.model.truth_variant).size
        n_ctrl = initial_state(p, self.model.controller_variant).size
        if self.scenario.x0 is not None:
            _require(len(self.scenario.x0) == n_truth, "scenario.x0", f"must have {n_truth} entries for {self.model.truth_variant.value}")
        if self.controller.x_hat0 is not None:
            _require(len(self.controller.x_hat0) == n_ctrl, "controller.x_hat0",
                     f"must have {n_ctrl} entries for {self.model.controller_variant.value}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config_version": 1,
            "model": self.model.to_dict(),
            "noise": self.noise.to_dict(),
            "controller": self.controller.to_dict(),
            "solver": self.solver.to_dict(),
            "scenario": self.scenario.to_dict(),
            "run": self.run.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def replace(self, **sections) -> 'Config':
        """New Config with whole sections swapped (e.g. controller=...), cross-checked like a loaded one"""
        merged = {**{name: getattr(self, name) for name in SECTIONS}, **sections}
        config = Config(source=self.source, **merged)
        config._validate_cross_fields()
        return config


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; tables merge, every other value replaces"""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


_LOCATION = re.compile(r"line (\d+), column (\d+)")


def _parse_text(text: str, path: str) -> Dict[str, Any]:
    if path.endswith(".json"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigParseError(exc.msg, path, exc.lineno, exc.colno)
        if not isinstance(data, dict):
            raise ConfigParseError("top level must be an object", path)
        return data
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", 0) or 0
        column = getattr(exc, "colno", 0) or 0
        if not line:
            match = _LOCATION.search(str(exc))
            if match:
                line, column = int(match.group(1)), int(match.group(2))
        message = getattr(exc, "msg", None) or _LOCATION.sub("", str(exc)).strip(" ()")
        raise ConfigParseError(message, path, line, column)


def load_defaults() -> Dict[str, Any]:
    return _parse_text(DEFAULTS_PATH.read_text(encoding="utf-8"), str(DEFAULTS_PATH))


def parse_override(item: str) -> Dict[str, Any]:
    """'section.key=value' to a nested dict; value is parsed as a TOML value"""
    if "=" not in item:
        raise ConfigParseError(f"override {item!r} is not of the form section.key=value", "--set")
    dotted, raw = item.split("=", 1)
    parts = [p.strip() for p in dotted.strip().split(".")]
    if len(parts) < 2 or not all(parts):
        raise ConfigParseError(f"override key {dotted!r} must be section.key", "--set")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        # bare words are taken as strings (controller.type=pi)
        value = raw.strip()
    nested: Dict[str, Any] = {parts[-1]: value}
    for part in reversed(parts[:-1]):
        nested = {part: nested}
    return nested


def load_config(path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = ()) -> Config:
    """
    Load a config file over the packaged defaults.

    Args:
        path: TOML file, or a JSON echo from a previous run. None uses the
            defaults alone.
        overrides: ``section.key=value`` strings applied last.

    Returns:
        The validated Config.

    Raises:
        ConfigParseError: The file cannot be read or parsed.
        ConfigValidationError: A value violates a section invariant.
    """
    merged = load_defaults()
    source = ""
    if path is not None:
        source = str(path)
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigParseError(f"cannot read config: {exc.strerror or exc}", source)
        merged = deep_merge(merged, _parse_text(text, source))
    for item in overrides:
        merged = deep_merge(merged, parse_override(item))
    return Config.from_dict(merged, source=source)


def apply_env(config: Config) -> Config:
    """RunConfig.from_env plus the OPENNMPC_SEED scenario override"""
    run = RunConfig.from_env(config.run)
    scenario = config.scenario
    seed = os.getenv("OPENNMPC_SEED")
    if seed:
        try:
            seed_value = int(seed)
        except ValueError:
            raise ConfigValidationError("scenario.seed", f"OPENNMPC_SEED must be an integer, got {seed!r}")
        _require(seed_value >= 0, "scenario.seed", "OPENNMPC_SEED must be >= 0")
        scenario = replace(scenario, seed=seed_value)
    return config.replace(run=run, scenario=scenario)
