import json
import os

import numpy as np
import pytest

from opennmpc.config import load_config
from opennmpc.errors import LengthMismatchError
from opennmpc.montecarlo.closed_loop import ClosedLoopResult, phi_metric, run_closed_loop
from opennmpc.montecarlo.engine import (
    RUNS_FILE,
    compare_controllers,
    run_deterministic_reference,
    run_monte_carlo,
    scaling_benchmark,
)
from opennmpc.montecarlo.result_io import (
    append_jsonl,
    histogram_frame,
    read_csv,
    read_header,
    trajectory_frame,
    write_csv,
    write_json,
)
from opennmpc.montecarlo.scenario import Scenario
from opennmpc.montecarlo.statistics import collect_unconverged, histogram, ocp_table, summarize_phi
from tests.conftest import SMALL_OVERRIDES

EQUILIBRIUM = SMALL_OVERRIDES + (
    "model.cA_in=0.0",
    "scenario.setpoints=[[0.0, 273.65]]",
    "controller.type=pi",
)


@pytest.fixture
def pi_scenario(small_config):
    return Scenario.from_config(small_config, "pi")


def test_phi_metric_examples():
    z = np.array([1.0, 2.0, 3.0])
    assert phi_metric(z, z) == 0.0
    assert phi_metric(z + 1.0, z) == 1.0
    assert phi_metric([0.0, 3.0, 4.0], [0.0, 0.0, 0.0]) == pytest.approx(25.0 / 3.0)
    assert phi_metric(np.ones((2, 2)), np.zeros((2, 2))) == 2.0


def test_phi_metric_length_mismatch():
    with pytest.raises(LengthMismatchError):
        phi_metric([1.0, 2.0], [1.0])
    with pytest.raises(LengthMismatchError):
        phi_metric([], [])


def test_deterministic_pi_equilibrium_has_zero_phi():
    scenario = Scenario.from_config(load_config(overrides=EQUILIBRIUM)).deterministic_variant()
    outcome = run_closed_loop(scenario, 0)
    assert outcome.success
    res = outcome.data
    assert res.phi == pytest.approx(0.0, abs=1e-10)
    traj = res.trajectory
    assert traj.t.size == scenario.n_samples + 1
    np.testing.assert_allclose(traj.z[:, 0], 273.65, atol=1e-9)
    np.testing.assert_allclose(traj.u[:-1, 0], scenario.pi_settings()["u_max"] / 2.0)
    assert np.isnan(traj.u[-1, 0])


def test_closed_loop_is_reproducible(pi_scenario):
    a = run_closed_loop(pi_scenario, 2).data
    b = run_closed_loop(pi_scenario, 2).data
    c = run_closed_loop(pi_scenario, 3).data
    assert a.phi == b.phi
    np.testing.assert_array_equal(a.trajectory.y, b.trajectory.y)
    # measurement noise differs between simulation indices even when the input saturates
    assert not np.array_equal(a.trajectory.y, c.trajectory.y)


def test_paired_seeds_share_measurement_noise(small_config):
    nmpc = Scenario.from_config(small_config, "nmpc")
    pi = nmpc.with_controller("pi")
    assert nmpc.stream_tag == pi.stream_tag == 0
    y_nmpc = run_closed_loop(nmpc, 0).data.trajectory.y
    y_pi = run_closed_loop(pi, 0).data.trajectory.y
    # the first sample is taken before any input is applied
    assert y_nmpc[0, 0] == y_pi[0, 0]
    unpaired = load_config(overrides=SMALL_OVERRIDES + ("scenario.paired_seeds=false",))
    assert Scenario.from_config(unpaired, "nmpc").stream_tag != Scenario.from_config(unpaired, "pi").stream_tag


def test_nmpc_closed_loop_records_solver_statistics(small_config):
    res = run_closed_loop(Scenario.from_config(small_config, "nmpc"), 0).data
    n = Scenario.from_config(small_config).n_samples
    assert res.n_ocps == n
    assert res.stats["ocps"] == n
    assert res.ocp_failures == len(res.unconverged)
    u = res.trajectory.u[:-1, 0]
    params = small_config.model.params
    assert np.all(u >= params.u_min) and np.all(u <= params.u_max)


def test_numerical_failure_is_recorded_not_raised():
    config = load_config(overrides=SMALL_OVERRIDES + ("scenario.x0=[0.08, 0.12, -1.0]",))
    outcome = run_closed_loop(Scenario.from_config(config, "pi"), 0)
    assert outcome.failed
    assert outcome.error_type == "DomainError"


def test_monte_carlo_is_independent_of_worker_count(pi_scenario):
    one = run_monte_carlo(pi_scenario, 3, workers=1)
    two = run_monte_carlo(pi_scenario, 3, workers=2)
    np.testing.assert_array_equal(one.phi_values, two.phi_values)
    assert one.to_dict(include_wall_clock=False) == two.to_dict(include_wall_clock=False)
    assert [r.sim_index for r in two.runs] == [0, 1, 2]


def test_monte_carlo_aggregate(pi_scenario):
    agg = run_monte_carlo(pi_scenario, 3, bins=2)
    assert agg.n_failed == 0
    assert agg.phi["count"] == 3
    assert agg.phi["mean"] == pytest.approx(float(np.mean(agg.phi_values)))
    assert agg.phi["min"] <= agg.phi["deciles"]["0.5"] <= agg.phi["max"]
    assert int(agg.histogram_counts.sum()) == 3
    assert agg.ocp["total_ocps"] == 0
    frame = agg.runs_frame()
    assert list(frame["sim_index"]) == [0, 1, 2]
    doc = agg.to_dict()
    assert doc["workers"] == 1
    assert "wall_clock" not in agg.to_dict(include_wall_clock=False)


def test_failed_simulations_are_excluded_from_statistics():
    config = load_config(overrides=SMALL_OVERRIDES + ("scenario.x0=[0.08, 0.12, -1.0]",))
    agg = run_monte_carlo(Scenario.from_config(config, "pi"), 2)
    assert agg.n_failed == 2
    assert agg.phi["count"] == 0 and agg.phi["mean"] is None
    assert agg.to_dict()["failed_sims"][0]["error"].startswith("DomainError")
    np.testing.assert_array_equal(agg.histogram_counts, [0])


def test_monte_carlo_rejects_bad_arguments(pi_scenario):
    with pytest.raises(ValueError):
        run_monte_carlo(pi_scenario, 0)
    with pytest.raises(ValueError):
        run_monte_carlo(pi_scenario, 1, workers=0)


def test_streaming_sinks(pi_scenario, tmp_path):
    (tmp_path / RUNS_FILE).write_text("stale\n")
    agg = run_monte_carlo(pi_scenario, 2, out_dir=str(tmp_path), save_trajectories=True, trajectory_stride=2)
    lines = (tmp_path / RUNS_FILE).read_text().splitlines()
    assert len(lines) == 2
    assert sorted(json.loads(line)["sim_index"] for line in lines) == [0, 1]
    path = tmp_path / "trajectories" / "pi_00001.csv"
    config, seed = read_header(path)
    assert config == pi_scenario.config.to_dict()
    assert seed == pi_scenario.seed
    frame = read_csv(path)
    assert list(frame.columns) == ["t", "z", "zbar", "u", "y"]
    assert list(frame["t"]) == [0.0, 2.0, 4.0, 6.0, 8.0]
    assert agg.n_failed == 0


def test_deterministic_reference(pi_scenario):
    phi = run_deterministic_reference(pi_scenario)
    assert phi is not None and phi >= 0.0
    assert phi == run_deterministic_reference(pi_scenario)


def test_scaling_benchmark_adds_single_worker_baseline(pi_scenario):
    frame = scaling_benchmark(pi_scenario, n_sims=2, worker_counts=(2,))
    assert list(frame.columns) == ["workers", "wall_clock", "speedup", "efficiency", "identical"]
    assert list(frame["workers"]) == [1, 2]
    assert frame["speedup"].iloc[0] == 1.0
    assert frame["identical"].all()
    with pytest.raises(ValueError):
        scaling_benchmark(pi_scenario, n_sims=1, worker_counts=(0,))


def test_compare_controllers_shape(small_config):
    cmp = compare_controllers(Scenario.from_config(small_config), 1)
    doc = cmp.to_dict(include_wall_clock=False)
    assert doc["paired_seeds"] is True
    assert doc["nmpc"]["controller"] == "nmpc" and doc["pi"]["controller"] == "pi"
    assert set(doc["verdict"]) == {"nmpc_mean_lower", "nmpc_variance_lower", "nmpc_outperforms"}
    assert doc["verdict"]["nmpc_mean_lower"] == (cmp.nmpc.phi["mean"] < cmp.pi.phi["mean"])


# statistics

def test_summarize_phi():
    summary = summarize_phi([1.0, 2.0, 3.0, 4.0, float("nan")])
    assert summary["count"] == 4
    assert summary["mean"] == 2.5
    assert summary["variance"] == pytest.approx(5.0 / 3.0)
    assert (summary["min"], summary["max"]) == (1.0, 4.0)
    assert summary["deciles"]["0.5"] == 2.5
    assert summary["skewness"] == pytest.approx(0.0, abs=1e-12)
    assert list(summary["deciles"]) == [f"0.{k}" for k in range(1, 10)]


def test_summarize_phi_edge_cases():
    assert summarize_phi([])["mean"] is None
    single = summarize_phi([2.0])
    assert single["variance"] == 0.0 and single["skewness"] is None


def test_histogram():
    edges, counts = histogram([0.0, 1.0, 2.0, 3.0], bins=2)
    np.testing.assert_array_equal(edges, [0.0, 1.5, 3.0])
    np.testing.assert_array_equal(counts, [2, 2])
    frame = histogram_frame(edges, counts)
    assert list(frame.columns) == ["bin_left", "bin_right", "count"]
    edges, counts = histogram([])
    np.testing.assert_array_equal(counts, [0])


def test_ocp_table_and_unconverged():
    results = [
        ClosedLoopResult(0, 1, "nmpc", 1.0, n_ocps=4, ocp_failures=1,
                         stats={"ocps": 4, "ocp_failures": 1, "sqp_iterations": 20, "qp_iterations": 60,
                                "status_Converged": 3, "status_MaxIter": 1},
                         max_sqp_iterations=9,
                         unconverged=[{"t": 3.0, "status": "MaxIter", "stationarity": 1e-3, "feasibility": 0.0}]),
        ClosedLoopResult(1, 1, "nmpc", 2.0, n_ocps=4, stats={"ocps": 4, "sqp_iterations": 12, "status_Converged": 4},
                         max_sqp_iterations=5),
    ]
    table = ocp_table(results)
    assert table["total_ocps"] == 8
    assert table["failed_ocps"] == 1
    assert table["percentage_success"] == pytest.approx(87.5)
    assert table["mean_sqp_iterations"] == pytest.approx(4.0)
    assert table["max_sqp_iterations"] == 9
    assert table["status_counts"] == {"Converged": 7, "MaxIter": 1}
    unconverged = collect_unconverged(results)
    assert unconverged == [{"sim_index": 0, "t": 3.0, "status": "MaxIter", "stationarity": 1e-3, "feasibility": 0.0}]
    assert ocp_table([])["percentage_success"] is None


# result files

def test_json_and_csv_carry_config_and_seed(tmp_path, small_config):
    echo = small_config.to_dict()
    path = write_json(tmp_path / "out" / "summary.json", {"phi": float("nan"), "n": np.int64(3)}, echo, 42)
    doc = json.loads(path.read_text())
    assert doc["phi"] is None and doc["n"] == 3
    assert doc["seed"] == 42 and doc["config"] == echo
    frame = trajectory_frame({"t": [0.0, 1.0], "z": [1.0, 2.0], "zbar": [1.0, 1.0], "u": [0.1, np.nan], "y": [1.1, 2.1]})
    csv = write_csv(tmp_path / "traj.csv", frame, echo, 42)
    assert read_header(csv) == (echo, 42)
    back = read_csv(csv)
    assert back.shape == (2, 5)
    assert np.isnan(back["u"].iloc[1])


def test_append_jsonl(tmp_path):
    sink = tmp_path / "a" / "runs.jsonl"
    append_jsonl({"sim_index": 0, "phi": float("inf")}, sink)
    append_jsonl({"sim_index": 1, "phi": 1.5}, sink)
    rows = [json.loads(line) for line in sink.read_text().splitlines()]
    assert rows == [{"sim_index": 0, "phi": None}, {"sim_index": 1, "phi": 1.5}]


def test_nmpc_closed_loop_subproblems_never_fail(small_config):
    res = run_closed_loop(Scenario.from_config(small_config, "nmpc"), 1).data
    assert res.stats.get("status_QpFailed", 0) == 0
    assert res.stats.get("status_EvalFailed", 0) == 0
    assert res.stats["sqp_iterations"] > 0
    assert 2 * res.stats.get("status_Converged", 0) >= res.n_ocps


def _all_workers() -> int:
    return os.cpu_count() or 1


@pytest.mark.slow
def test_nmpc_outperforms_pi_on_paired_seeds():
    config = load_config(overrides=("run.n_sims=500",))
    cmp = compare_controllers(Scenario.from_config(config), 500, workers=_all_workers())
    assert cmp.nmpc.n_failed == 0 and cmp.pi.n_failed == 0
    assert cmp.mean_lower and cmp.variance_lower


@pytest.mark.slow
def test_nmpc_solves_nearly_every_ocp():
    # full horizon and setpoint profile, first setpoint change only
    config = load_config(overrides=("scenario.tf=250.0",))
    agg = run_monte_carlo(Scenario.from_config(config, "nmpc"), 1000, workers=_all_workers())
    assert agg.n_failed == 0
    assert agg.ocp["total_ocps"] >= 1000 * 250
    assert agg.ocp["percentage_success"] >= 99.9
    assert agg.ocp["status_counts"].get("QpFailed", 0) == 0


@pytest.mark.slow
@pytest.mark.skipif(_all_workers() < 4, reason="needs 4 cores")
def test_four_workers_reach_three_quarters_linear_speedup():
    config = load_config(overrides=("scenario.tf=60.0",))
    frame = scaling_benchmark(Scenario.from_config(config, "nmpc"), n_sims=16, worker_counts=(4,))
    row = frame[frame["workers"] == 4].iloc[0]
    assert row["identical"]
    assert row["speedup"] >= 0.75 * 4
