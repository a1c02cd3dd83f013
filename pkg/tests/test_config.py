import json
from dataclasses import replace

import pytest

from opennmpc.config import Config, apply_env, load_config, parse_override
from opennmpc.errors import ConfigParseError, ConfigValidationError
from opennmpc.models.cstr import CstrVariant


def test_defaults(default_config):
    cfg = default_config
    assert cfg.scenario.Ts == 1.0
    assert cfg.scenario.n_samples == 600
    assert cfg.controller.type == "nmpc"
    assert cfg.controller.N == 60
    assert cfg.model.truth_variant is CstrVariant.THREE_STATE
    assert cfg.model.controller_variant is CstrVariant.ONE_STATE
    assert cfg.model.params.u_max == pytest.approx(1.0 / 60.0)
    assert cfg.noise.R_matrix.shape == (1, 1)
    assert cfg.solver.eps == 1e-6


def test_json_echo_round_trip(default_config, tmp_path):
    echo = tmp_path / "echo.json"
    echo.write_text(default_config.to_json())
    again = load_config(echo)
    assert again == default_config
    assert Config.from_dict(json.loads(default_config.to_json())) == default_config


def test_minimal_file_is_merged_over_defaults(tmp_path):
    path = tmp_path / "pi.toml"
    path.write_text('[controller]\ntype = "pi"\nkP = -2e-3\n')
    cfg = load_config(path)
    assert cfg.controller.type == "pi"
    assert cfg.controller.kP == -2e-3
    assert cfg.controller.kI == -1e-4
    assert cfg.source == str(path)


def test_overrides_apply_last(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[controller]\nN = 10\n")
    cfg = load_config(path, overrides=["controller.N=40", "scenario.setpoints=[[0.0, 300.0]]"])
    assert cfg.controller.N == 40
    assert cfg.scenario.setpoints.at(100.0)[0] == 300.0


def test_non_integral_sample_count_is_rejected():
    with pytest.raises(ConfigValidationError) as info:
        load_config(overrides=["scenario.Ts=0.7"])
    assert info.value.field == "scenario.Ts"


@pytest.mark.parametrize("override, field", [
    ("model.foo=1", "model.foo"),
    ("model.V=-1.0", "model.V"),
    ("model.F_range=[10.0, 0.0]", "model.F_range"),
    ("model.truth_variant=two_state", "model.truth_variant"),
    ("noise.R=[[1.0, 0.0], [0.0, 1.0]]", "noise.R"),
    ("noise.R=-1.0", "noise.R"),
    ("controller.type=lqr", "controller.type"),
    ("controller.N=0", "controller.N"),
    ("controller.u_bar=5000.0", "controller.u_bar"),
    ("controller.x_hat0=[1.0, 2.0]", "controller.x_hat0"),
    ("controller.scale_variables=3", "controller.scale_variables"),
    ("solver.beta_ls=1.0", "solver.beta_ls"),
    ("scenario.setpoints=[[5.0, 1.0], [1.0, 2.0]]", "scenario.setpoints"),
    ("run.bins=unknown_rule", "run.bins"),
    ("run.worker_counts=[]", "run.worker_counts"),
    ("bogus.key=1", "bogus"),
])
def test_validation_names_the_field(override, field):
    with pytest.raises(ConfigValidationError) as info:
        load_config(overrides=[override])
    assert info.value.field == field


def test_toml_parse_error_has_location(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("[model]\nV = 0.1\n[scenario\n")
    with pytest.raises(ConfigParseError) as info:
        load_config(path)
    assert info.value.path == str(path)
    assert info.value.line == 3


def test_json_parse_error_has_location(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "model": ,\n}')
    with pytest.raises(ConfigParseError) as info:
        load_config(path)
    assert info.value.line == 2


def test_missing_file():
    with pytest.raises(ConfigParseError):
        load_config("/nonexistent/opennmpc.toml")


def test_parse_override():
    assert parse_override("controller.N=40") == {"controller": {"N": 40}}
    assert parse_override("controller.type=pi") == {"controller": {"type": "pi"}}
    assert parse_override("scenario.setpoints=[[0.0, 1.0]]") == {"scenario": {"setpoints": [[0.0, 1.0]]}}
    with pytest.raises(ConfigParseError):
        parse_override("controller.N")
    with pytest.raises(ConfigParseError):
        parse_override("N=4")


def test_environment_overrides(default_config, monkeypatch):
    monkeypatch.setenv("OPENNMPC_WORKERS", "3")
    monkeypatch.setenv("OPENNMPC_OUT_DIR", "/tmp/elsewhere")
    monkeypatch.setenv("OPENNMPC_SEED", "7")
    cfg = apply_env(default_config)
    assert cfg.run.workers == 3
    assert cfg.run.out_dir == "/tmp/elsewhere"
    assert cfg.scenario.seed == 7
    assert cfg.controller == default_config.controller


def test_bad_environment_value(default_config, monkeypatch):
    monkeypatch.setenv("OPENNMPC_WORKERS", "many")
    with pytest.raises(ConfigValidationError) as info:
        apply_env(default_config)
    assert info.value.field == "run.workers"


def test_initial_states_override():
    cfg = load_config(overrides=["scenario.x0=[0.08, 0.12, 30.0]", "controller.x_hat0=30.0", "controller.u_bar=500.0"])
    assert cfg.scenario.x0 == (0.08, 0.12, 30.0)
    assert cfg.controller.x_hat0 == (30.0,)
    assert Config.from_dict(cfg.to_dict()) == cfg


def test_replace_runs_cross_field_checks(default_config):
    assert default_config.controller.scale_variables is True
    unscaled = default_config.replace(controller=replace(default_config.controller, scale_variables=False))
    assert unscaled.controller.scale_variables is False
    with pytest.raises(ConfigValidationError) as info:
        default_config.replace(controller=replace(default_config.controller, x_hat0=(1.0, 2.0)))
    assert info.value.field == "controller.x_hat0"
    with pytest.raises(ConfigValidationError) as info:
        default_config.replace(scenario=replace(default_config.scenario, x0=(30.0,)))
    assert info.value.field == "scenario.x0"
