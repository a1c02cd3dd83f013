"""
A closed-loop experiment: truth model, noise, controller and timing.

A Scenario only holds the (picklable) Config plus a few flags. Models and
controllers are rebuilt from it inside whichever process runs a simulation,
so nothing with closures crosses a process boundary.
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from opennmpc.config.config import Config
from opennmpc.controllers.base_controller import Controller
from opennmpc.controllers.factory import create_controller
from opennmpc.controllers.nmpc import NmpcSettings
from opennmpc.models.cstr import ML_PER_MIN_TO_L_PER_S, CstrParams, build_cstr_model, initial_state
from opennmpc.ocp.nlp import Horizon
from opennmpc.ocp.setpoints import SetpointProfile
from opennmpc.system_sim.sde_system import NoiseSpec, SdeModel

CONTROLLER_TAGS = {"nmpc": 1, "pi": 2}


@dataclass(frozen=True)
class Scenario:
    config: Config
    controller_type: str = "nmpc"
    deterministic: bool = False

    def __post_init__(self):
        if self.controller_type not in CONTROLLER_TAGS:
            raise ValueError(f"Invalid controller type: {self.controller_type}. Must be 'nmpc' or 'pi'")

    @classmethod
    def from_config(cls, config: Config, controller_type: Optional[str] = None) -> 'Scenario':
        return cls(config=config, controller_type=controller_type or config.controller.type)

    def with_controller(self, controller_type: str) -> 'Scenario':
        return replace(self, controller_type=controller_type)

    def deterministic_variant(self) -> 'Scenario':
        """Same scenario with no process noise and noise-free measurements in the plant"""
        return replace(self, deterministic=True)

    @property
    def seed(self) -> int:
        return self.config.scenario.seed

    @property
    def stream_tag(self) -> int:
        """0 shares noise realizations across controllers; otherwise one tag per controller"""
        return 0 if self.config.scenario.paired_seeds else CONTROLLER_TAGS[self.controller_type]

    @property
    def setpoints(self) -> SetpointProfile:
        return self.config.scenario.setpoints

    @property
    def n_samples(self) -> int:
        return self.config.scenario.n_samples

    def sample_times(self) -> np.ndarray:
        return self.config.scenario.sample_times()

    def _scaled_params(self) -> CstrParams:
        return self.config.model.params.with_noise_scale(self.config.noise.process_scale)

    def truth_model(self) -> SdeModel:
        params = self._scaled_params()
        if self.deterministic:
            params = params.with_noise_scale(0.0)
        return build_cstr_model(params, self.config.model.truth_variant)

    def noise_spec(self) -> NoiseSpec:
        R = self.config.noise.R_matrix
        if self.deterministic:
            R = np.zeros_like(R)
        return NoiseSpec(R=R, n_w=initial_state(self.config.model.params, self.config.model.truth_variant).size)

    def controller_model(self) -> SdeModel:
        return build_cstr_model(self._scaled_params(), self.config.model.controller_variant)

    def x0(self) -> np.ndarray:
        if self.config.scenario.x0 is not None:
            return np.array(self.config.scenario.x0, dtype=np.float64)
        return initial_state(self.config.model.params, self.config.model.truth_variant)

    def nmpc_settings(self) -> NmpcSettings:
        cfg = self.config
        params = cfg.model.params
        ctrl = cfg.controller
        x_hat0 = np.asarray(ctrl.x_hat0, dtype=np.float64) if ctrl.x_hat0 is not None else initial_state(params, cfg.model.controller_variant)
        # amounts in concentration units, flows relative to the admissible span
        span = np.atleast_1d(params.u_max - params.u_min)
        return NmpcSettings(
            model=self.controller_model(),
            R=cfg.noise.R_matrix,
            horizon=Horizon(N=ctrl.N, Ts=cfg.scenario.Ts, Nc=ctrl.Nc),
            u_min=params.u_min,
            u_max=params.u_max,
            Qz=ctrl.Qz,
            x_hat0=x_hat0,
            P0=ctrl.P0,
            options=cfg.solver,
            filter_steps=ctrl.filter_steps,
            warm_start=ctrl.warm_start,
            x_scale=np.full(x_hat0.size, params.V) if ctrl.scale_variables else None,
            u_scale=np.where(span > 0.0, span, 1.0) if ctrl.scale_variables else None,
        )

    def pi_settings(self) -> dict:
        cfg = self.config
        params = cfg.model.params
        ctrl = cfg.controller
        u_bar = None if ctrl.u_bar is None else ctrl.u_bar * ML_PER_MIN_TO_L_PER_S
        return {
            "kP": ctrl.kP,
            "kI": ctrl.kI,
            "kaw": ctrl.kaw,
            "Ts": cfg.scenario.Ts,
            "u_min": params.u_min,
            "u_max": params.u_max,
            "u_bar": u_bar,
        }

    def build_controller(self, verbose: bool = False, logger_callback: Optional[Callable[[str], None]] = None) -> Controller:
        if self.controller_type == "nmpc":
            return create_controller("nmpc", nmpc_settings=self.nmpc_settings(), verbose=verbose, logger_callback=logger_callback)
        return create_controller("pi", pi_settings=self.pi_settings(), verbose=verbose, logger_callback=logger_callback)
