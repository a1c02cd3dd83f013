import json

import pytest

from opennmpc.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, build_parser, main
from opennmpc.montecarlo.result_io import read_csv, read_header
from tests.conftest import SMALL_OVERRIDES


def with_overrides(*items):
    args = []
    for item in SMALL_OVERRIDES + items:
        args.extend(["--set", item])
    return args


def load(path):
    return json.loads(path.read_text())


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_parser_rejects_non_positive_workers():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["montecarlo", "--workers", "0"])


def test_simulate_pi_equilibrium(tmp_path):
    argv = ["simulate", "--out", str(tmp_path), "--deterministic", "--controller", "pi"] + with_overrides(
        "model.cA_in=0.0", "scenario.setpoints=[[0.0, 273.65]]"
    )
    assert main(argv) == EXIT_OK
    summary = load(tmp_path / "summary.json")
    assert summary["phi"] == pytest.approx(0.0, abs=1e-10)
    assert summary["deterministic"] is True
    assert summary["config"]["controller"]["type"] == "pi"
    assert summary["seed"] == summary["config"]["scenario"]["seed"]
    traj = read_csv(tmp_path / "trajectory.csv")
    assert len(traj) == 9


def test_simulate_both_controllers(tmp_path):
    assert main(["simulate", "--out", str(tmp_path), "--controller", "both", "--seed", "5"] + with_overrides()) == EXIT_OK
    summary = load(tmp_path / "summary.json")
    assert set(summary["runs"]) == {"nmpc", "pi"}
    assert summary["runs"]["nmpc"]["ocp"]["total_ocps"] == 8
    assert summary["seed"] == 5
    assert (tmp_path / "trajectory_nmpc.csv").exists()
    assert (tmp_path / "trajectory_pi.csv").exists()


def _aggregate_without_timing(path):
    doc = load(path)
    for key in ("config", "workers", "wall_clock"):
        doc.pop(key)
    return doc


def test_montecarlo_does_not_depend_on_workers(tmp_path):
    outputs = []
    for workers in ("1", "2"):
        out = tmp_path / f"w{workers}"
        argv = ["montecarlo", "--out", str(out), "--sims", "3", "--workers", workers, "--controller", "pi",
                "--no-progress"] + with_overrides()
        assert main(argv) == EXIT_OK
        outputs.append(out)
    assert _aggregate_without_timing(outputs[0] / "aggregate.json") == _aggregate_without_timing(outputs[1] / "aggregate.json")
    runs = read_csv(outputs[0] / "runs.csv")
    assert list(runs["sim_index"]) == [0, 1, 2]
    config, seed = read_header(outputs[0] / "histogram.csv")
    assert config["run"]["n_sims"] == 3
    assert seed == config["scenario"]["seed"]
    assert load(outputs[0] / "aggregate.json")["phi_deterministic"] is not None


def test_histogram_rebins_runs(tmp_path):
    argv = ["montecarlo", "--out", str(tmp_path), "--sims", "3", "--controller", "pi", "--no-progress",
            "--no-reference"] + with_overrides()
    assert main(argv) == EXIT_OK
    assert main(["histogram", "--input", str(tmp_path / "runs.csv"), "--bins", "3"]) == EXIT_OK
    frame = read_csv(tmp_path / "histogram.csv")
    assert len(frame) == 3
    assert int(frame["count"].sum()) == 3
    config, _ = read_header(tmp_path / "histogram.csv")
    assert config["run"]["n_sims"] == 3


def test_benchmark_writes_speedup_table(tmp_path):
    argv = ["benchmark", "--out", str(tmp_path), "--sims", "2", "--worker-counts", "1,2", "--controller", "pi",
            "--no-progress"] + with_overrides()
    assert main(argv) == EXIT_OK
    frame = read_csv(tmp_path / "speedup.csv")
    assert list(frame["workers"]) == [1, 2]
    assert frame["speedup"].iloc[0] == 1.0
    assert frame["identical"].all()


def test_compare_writes_verdict(tmp_path):
    argv = ["compare", "--out", str(tmp_path), "--sims", "1", "--no-progress"] + with_overrides()
    assert main(argv) == EXIT_OK
    doc = load(tmp_path / "comparison.json")
    assert set(doc["verdict"]) == {"nmpc_mean_lower", "nmpc_variance_lower", "nmpc_outperforms"}
    assert (tmp_path / "histogram_nmpc.csv").exists() and (tmp_path / "histogram_pi.csv").exists()
    runs = read_csv(tmp_path / "runs.csv")
    assert sorted(runs["controller"].unique()) == ["nmpc", "pi"]


def test_parse_error_exits_with_config_status(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[scenario]\nTs = \n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    record = load(tmp_path / "error.json")
    assert record["error_type"] == "ConfigParseError"
    assert record["command"] == "simulate"
    assert record["line"] == 2


def test_validation_error_names_field(tmp_path):
    assert main(["montecarlo", "--out", str(tmp_path), "--set", "scenario.Ts=0.7"]) == EXIT_CONFIG
    record = load(tmp_path / "error.json")
    assert record["error_type"] == "ConfigValidationError"
    assert record["field"] == "scenario.Ts"


def test_missing_histogram_input_is_a_runtime_error(tmp_path):
    assert main(["histogram", "--input", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == EXIT_RUNTIME
    assert load(tmp_path / "error.json")["error_type"] == "FileNotFoundError"
