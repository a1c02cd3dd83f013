"""
opennmpc command line.

    opennmpc simulate   [--controller nmpc|pi|both] [--deterministic]
    opennmpc montecarlo [--sims N] [--workers N]
    opennmpc benchmark  [--worker-counts 1,2,4,8]
    opennmpc histogram  --input runs.csv [--bins fd]
    opennmpc compare    [--sims N] [--workers N]

Every command takes --config PATH, --set section.key=value (repeatable),
--out DIR and --seed N. Exit status is 0 on success, 2 for config errors and
1 for runtime errors; failures also leave an ``error.json`` in the output
directory.
"""

import argparse
import json
import sys
import traceback
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from dotenv import load_dotenv

from opennmpc.config import Config, apply_env, deep_merge, load_config
from opennmpc.errors import ConfigException, ConfigParseError, ConfigValidationError, OpenNMPCException
from opennmpc.montecarlo.closed_loop import run_closed_loop
from opennmpc.montecarlo.engine import compare_controllers, run_deterministic_reference, run_monte_carlo, scaling_benchmark
from opennmpc.montecarlo.result_io import (
    histogram_frame,
    read_csv,
    read_header,
    trajectory_frame,
    write_csv,
    write_json,
)
from opennmpc.montecarlo.scenario import Scenario
from opennmpc.montecarlo.statistics import histogram, ocp_table

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _positive_int(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {value!r}")
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


def _worker_counts(value: str) -> List[int]:
    return [_positive_int(v) for v in value.split(",") if v.strip()]


def _bins(value: str):
    return int(value) if value.isdigit() else value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="TOML config (or a JSON echo of a previous run)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="K=V",
                        help="Override one config key, e.g. --set controller.N=40 (repeatable)")
    common.add_argument("--out", type=str, default=None, help="Output directory (default: run.out_dir)")
    common.add_argument("--seed", type=int, default=None, help="Base seed (default: scenario.seed)")
    common.add_argument("--verbose", action="store_true", help="Log solver and batch events")

    batch = argparse.ArgumentParser(add_help=False)
    batch.add_argument("--sims", type=_positive_int, default=None, help="Number of simulations (default: run.n_sims)")
    batch.add_argument("--workers", type=_positive_int, default=None, help="Worker processes (default: run.workers)")
    batch.add_argument("--bins", type=_bins, default=None, help="Histogram bins: a count or a numpy rule name")
    batch.add_argument("--no-progress", action="store_true", help="Disable the progress bar")

    parser = argparse.ArgumentParser(prog="opennmpc", description="Closed-loop NMPC Monte Carlo toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="One closed-loop simulation")
    sim.add_argument("--controller", choices=["nmpc", "pi", "both"], default=None,
                     help="Controller (default: controller.type); 'both' runs the two on the same noise")
    sim.add_argument("--sim-index", type=int, default=0, help="Simulation index selecting the noise streams")
    sim.add_argument("--deterministic", action="store_true", help="Noise-free plant and measurements")

    mc = sub.add_parser("montecarlo", parents=[common, batch], help="Monte Carlo batch")
    mc.add_argument("--controller", choices=["nmpc", "pi"], default=None)
    mc.add_argument("--no-reference", action="store_true", help="Skip the deterministic reference run")

    bench = sub.add_parser("benchmark", parents=[common, batch], help="Parallel scaling benchmark")
    bench.add_argument("--controller", choices=["nmpc", "pi"], default=None)
    bench.add_argument("--worker-counts", type=_worker_counts, default=None, help="Comma separated, e.g. 1,2,4,8")

    hist = sub.add_parser("histogram", parents=[common], help="Re-bin an existing runs.csv")
    hist.add_argument("--input", type=str, required=True, help="runs.csv written by montecarlo or compare")
    hist.add_argument("--bins", type=_bins, default=None, help="Histogram bins: a count or a numpy rule name")

    sub.add_parser("compare", parents=[common, batch], help="NMPC and PI batches on the same seeds")
    return parser


def resolve_config(args: argparse.Namespace) -> Config:
    """File, then --set overrides, then environment, then explicit flags"""
    config = apply_env(load_config(args.config, args.overrides))
    updates: Dict[str, Any] = {}
    if args.seed is not None:
        updates.setdefault("scenario", {})["seed"] = args.seed
    if args.out is not None:
        updates.setdefault("run", {})["out_dir"] = args.out
    for flag, key in (("sims", "n_sims"), ("workers", "workers"), ("bins", "bins"), ("worker_counts", "worker_counts")):
        value = getattr(args, flag, None)
        if value is not None:
            updates.setdefault("run", {})[key] = value
    controller = getattr(args, "controller", None)
    if controller in ("nmpc", "pi"):
        updates.setdefault("controller", {})["type"] = controller
    if not updates:
        return config
    return Config.from_dict(deep_merge(config.to_dict(), updates), source=config.source)


def cmd_simulate(config: Config, args: argparse.Namespace) -> int:
    out_dir = Path(config.run.out_dir)
    echo = config.to_dict()
    kinds = ["nmpc", "pi"] if args.controller == "both" else [config.controller.type]
    log = print if args.verbose else None
    summary: Dict[str, Any] = {"sim_index": args.sim_index, "deterministic": args.deterministic, "runs": {}}
    failed = False
    for kind in kinds:
        scenario = Scenario.from_config(config, kind)
        if args.deterministic:
            scenario = scenario.deterministic_variant()
        outcome = run_closed_loop(scenario, args.sim_index, keep_trajectory=True, verbose=args.verbose, logger_callback=log)
        if outcome.failed:
            failed = True
            summary["runs"][kind] = {"failed": True, "error_type": outcome.error_type, "error": outcome.error}
            continue
        res = outcome.data
        name = "trajectory.csv" if len(kinds) == 1 else f"trajectory_{kind}.csv"
        write_csv(out_dir / name, trajectory_frame(res.trajectory.columns(config.run.trajectory_stride)), echo, config.scenario.seed)
        summary["runs"][kind] = {
            "failed": False,
            "phi": res.phi,
            "n_ocps": res.n_ocps,
            "ocp_failures": res.ocp_failures,
            "ocp": ocp_table([res]) if kind == "nmpc" else None,
            "unconverged_ocps": res.unconverged,
            "wall_time": res.wall_time,
            "trajectory_file": name,
        }
    if len(kinds) == 1 and not failed:
        summary["phi"] = summary["runs"][kinds[0]]["phi"]
    write_json(out_dir / "summary.json", summary, echo, config.scenario.seed)
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_montecarlo(config: Config, args: argparse.Namespace) -> int:
    out_dir = Path(config.run.out_dir)
    echo = config.to_dict()
    scenario = Scenario.from_config(config)
    aggregate = run_monte_carlo(
        scenario,
        config.run.n_sims,
        workers=config.run.workers,
        out_dir=str(out_dir),
        save_trajectories=config.run.save_trajectories,
        trajectory_stride=config.run.trajectory_stride,
        bins=config.run.bins,
        progress=not args.no_progress,
        verbose=args.verbose,
    )
    if not args.no_reference:
        aggregate.phi_deterministic = run_deterministic_reference(scenario)
    write_json(out_dir / "aggregate.json", aggregate.to_dict(), echo, config.scenario.seed)
    write_csv(out_dir / "histogram.csv", histogram_frame(aggregate.histogram_edges, aggregate.histogram_counts), echo, config.scenario.seed)
    write_csv(out_dir / "runs.csv", aggregate.runs_frame(), echo, config.scenario.seed)
    return EXIT_OK


def cmd_benchmark(config: Config, args: argparse.Namespace) -> int:
    out_dir = Path(config.run.out_dir)
    table = scaling_benchmark(
        Scenario.from_config(config),
        config.run.n_sims,
        config.run.worker_counts,
        progress=not args.no_progress,
        verbose=args.verbose,
    )
    write_csv(out_dir / "speedup.csv", table, config.to_dict(), config.scenario.seed)
    return EXIT_OK


def cmd_histogram(config: Config, args: argparse.Namespace) -> int:
    source = Path(args.input)
    if not source.is_file():
        raise FileNotFoundError(f"no such results file: {source}")
    header_config, header_seed = read_header(source)
    runs = read_csv(source)
    if "phi" not in runs.columns:
        raise ValueError(f"{source} has no 'phi' column")
    echo = header_config if header_config is not None else config.to_dict()
    seed = header_seed if header_seed is not None else config.scenario.seed
    bins = args.bins if args.bins is not None else config.run.bins
    out_dir = Path(args.out) if args.out else source.parent
    groups = sorted(runs["controller"].unique()) if "controller" in runs.columns else [None]
    for group in groups:
        frame = runs if group is None else runs[runs["controller"] == group]
        edges, counts = histogram(frame["phi"].to_numpy(dtype=float), bins)
        name = "histogram.csv" if len(groups) == 1 else f"histogram_{group}.csv"
        write_csv(out_dir / name, histogram_frame(edges, counts), echo, seed)
    return EXIT_OK


def cmd_compare(config: Config, args: argparse.Namespace) -> int:
    out_dir = Path(config.run.out_dir)
    echo = config.to_dict()
    scenario = Scenario.from_config(config)
    comparison = compare_controllers(
        scenario,
        config.run.n_sims,
        workers=config.run.workers,
        bins=config.run.bins,
        progress=not args.no_progress,
        verbose=args.verbose,
    )
    comparison.nmpc.phi_deterministic = run_deterministic_reference(scenario.with_controller("nmpc"))
    comparison.pi.phi_deterministic = run_deterministic_reference(scenario.with_controller("pi"))
    write_json(out_dir / "comparison.json", comparison.to_dict(), echo, config.scenario.seed)
    for agg in (comparison.nmpc, comparison.pi):
        write_csv(out_dir / f"histogram_{agg.controller}.csv", histogram_frame(agg.histogram_edges, agg.histogram_counts),
                  echo, config.scenario.seed)
    runs = pd.concat([comparison.nmpc.runs_frame(), comparison.pi.runs_frame()], ignore_index=True)
    write_csv(out_dir / "runs.csv", runs, echo, config.scenario.seed)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "montecarlo": cmd_montecarlo,
    "benchmark": cmd_benchmark,
    "histogram": cmd_histogram,
    "compare": cmd_compare,
}


def _error_record(exc: BaseException, command: str) -> Dict[str, Any]:
    record: Dict[str, Any] = {"command": command, "error_type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigParseError):
        record.update(path=exc.path, line=exc.line, column=exc.column)
    elif isinstance(exc, ConfigValidationError):
        record["field"] = exc.field
    return record


def _write_error(out_dir: Path, record: Dict[str, Any]) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "error.json").write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    except OSError:
        pass


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out) if args.out else Path("results")
    try:
        config = resolve_config(args)
        out_dir = Path(config.run.out_dir)
        return COMMANDS[args.command](config, args)
    except ConfigException as exc:
        record = _error_record(exc, args.command)
        print(f"config error: {exc}", file=sys.stderr)
        _write_error(out_dir, record)
        return EXIT_CONFIG
    except (OpenNMPCException, OSError, ValueError) as exc:
        record = _error_record(exc, args.command)
        if args.verbose:
            record["traceback"] = traceback.format_exc()
        print(f"error: {exc}", file=sys.stderr)
        _write_error(out_dir, record)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
