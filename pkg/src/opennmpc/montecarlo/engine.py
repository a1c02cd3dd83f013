"""
Parallel Monte Carlo over closed-loop simulations.

Simulation indices are handed out one at a time from a process pool
(``imap_unordered`` with chunksize 1), so a slow simulation never holds back
a queue of others. Every simulation draws its noise from streams keyed by
(seed, sim_index), and results are re-ordered by index before aggregation,
so the aggregate does not depend on the number of workers.
"""

import time
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from opennmpc.montecarlo.closed_loop import ClosedLoopResult, SimulationOutcome, run_closed_loop
from opennmpc.montecarlo.result_io import append_jsonl, trajectory_frame, write_csv
from opennmpc.montecarlo.scenario import Scenario
from opennmpc.montecarlo.statistics import collect_unconverged, histogram, ocp_table, summarize_phi

RUNS_FILE = "runs.jsonl"


def _run_one(task: Tuple[Scenario, int, bool]) -> SimulationOutcome[ClosedLoopResult]:
    scenario, sim_index, keep_trajectory = task
    return run_closed_loop(scenario, sim_index, keep_trajectory=keep_trajectory)


@dataclass
class RunRecord:
    """One row of the per-simulation table"""
    sim_index: int
    controller: str
    seed: int
    phi: float
    n_ocps: int
    ocp_failures: int
    failed: bool
    error: str = ""

    @classmethod
    def from_outcome(cls, outcome: SimulationOutcome[ClosedLoopResult], scenario: Scenario) -> 'RunRecord':
        if outcome.failed:
            return cls(outcome.sim_index, scenario.controller_type, scenario.seed, float("nan"), 0, 0, True,
                       f"{outcome.error_type}: {outcome.error}")
        res = outcome.data
        return cls(res.sim_index, res.controller, res.seed, res.phi, res.n_ocps, res.ocp_failures, False)

    def to_dict(self) -> Dict[str, object]:
        return {
            "sim_index": self.sim_index,
            "controller": self.controller,
            "seed": self.seed,
            "phi": self.phi,
            "n_ocps": self.n_ocps,
            "ocp_failures": self.ocp_failures,
            "failed": self.failed,
            "error": self.error,
        }


@dataclass
class McAggregate:
    controller: str
    seed: int
    n_sims: int
    workers: int
    runs: List[RunRecord]
    phi: Dict[str, object]
    ocp: Dict[str, object]
    unconverged: List[dict]
    wall_clock: float
    histogram_edges: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))
    histogram_counts: np.ndarray = field(default_factory=lambda: np.array([0]))
    phi_deterministic: Optional[float] = None

    @property
    def phi_values(self) -> np.ndarray:
        return np.array([r.phi for r in self.runs], dtype=np.float64)

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.runs if r.failed)

    def runs_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_dict() for r in self.runs])

    def to_dict(self, include_wall_clock: bool = True) -> Dict[str, object]:
        out = {
            "controller": self.controller,
            "n_sims": self.n_sims,
            "n_failed": self.n_failed,
            "failed_sims": [{"sim_index": r.sim_index, "error": r.error} for r in self.runs if r.failed],
            "phi": self.phi,
            "phi_deterministic": self.phi_deterministic,
            "ocp": self.ocp,
            "unconverged_ocps": self.unconverged,
            "histogram": {"edges": self.histogram_edges.tolist(), "counts": self.histogram_counts.tolist()},
        }
        if include_wall_clock:
            out["workers"] = self.workers
            out["wall_clock"] = self.wall_clock
        return out


def _outcomes(
    scenario: Scenario,
    n_sims: int,
    workers: int,
    keep_trajectories: bool,
    progress: bool,
) -> Iterator[SimulationOutcome[ClosedLoopResult]]:
    tasks = ((scenario, i, keep_trajectories) for i in range(n_sims))
    desc = f"Simulating ({scenario.controller_type})"
    if workers == 1:
        yield from tqdm(map(_run_one, tasks), total=n_sims, desc=desc, disable=not progress)
        return
    with Pool(workers) as pool:
        yield from tqdm(pool.imap_unordered(_run_one, tasks, chunksize=1), total=n_sims, desc=desc, disable=not progress)


def run_monte_carlo(
    scenario: Scenario,
    n_sims: int,
    workers: int = 1,
    out_dir: Optional[str] = None,
    save_trajectories: bool = False,
    trajectory_stride: int = 1,
    bins="fd",
    progress: bool = False,
    verbose: bool = False,
    logger_callback: Optional[Callable[[str], None]] = None,
) -> McAggregate:
    """
    Run simulations 0..n_sims-1 of the scenario over a pool of workers.

    Failed simulations are recorded and excluded from the Phi statistics;
    they never abort the batch. With ``out_dir`` every finished run is
    appended to ``runs.jsonl`` as it arrives, and with ``save_trajectories``
    each trajectory is written to ``trajectories/<controller>_<index>.csv``
    and then dropped from memory.

    Args:
        scenario: Experiment definition shared by all simulations
        n_sims: Number of simulations (>= 1)
        workers: Number of worker processes (>= 1); 1 runs in-process
        out_dir: Optional directory for the streaming sinks

    Returns:
        McAggregate with runs in index order
    """
    if n_sims < 1:
        raise ValueError(f"n_sims must be >= 1, got {n_sims}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    log = logger_callback if logger_callback else (print if verbose else lambda _: None)
    sink = Path(out_dir) / RUNS_FILE if out_dir else None
    if sink is not None and sink.exists():
        sink.unlink()
    config_echo = scenario.config.to_dict()

    results: Dict[int, ClosedLoopResult] = {}
    records: Dict[int, RunRecord] = {}
    start = time.perf_counter()
    for outcome in _outcomes(scenario, n_sims, workers, save_trajectories and out_dir is not None, progress):
        record = RunRecord.from_outcome(outcome, scenario)
        records[outcome.sim_index] = record
        if outcome.failed:
            log(f"Simulation {outcome.sim_index} failed: {record.error}")
        else:
            res = outcome.data
            if res.trajectory is not None:
                path = Path(out_dir) / "trajectories" / f"{scenario.controller_type}_{res.sim_index:05d}.csv"
                write_csv(path, trajectory_frame(res.trajectory.columns(trajectory_stride)), config_echo, scenario.seed)
                res.trajectory = None
            results[outcome.sim_index] = res
        if sink is not None:
            append_jsonl(record.to_dict(), sink)
    wall_clock = time.perf_counter() - start

    runs = [records[i] for i in range(n_sims)]
    ordered = [results[i] for i in range(n_sims) if i in results]
    phi_values = [r.phi for r in runs if not r.failed]
    edges, counts = histogram(phi_values, bins)
    aggregate = McAggregate(
        controller=scenario.controller_type,
        seed=scenario.seed,
        n_sims=n_sims,
        workers=workers,
        runs=runs,
        phi=summarize_phi(phi_values),
        ocp=ocp_table(ordered),
        unconverged=collect_unconverged(ordered),
        wall_clock=wall_clock,
        histogram_edges=edges,
        histogram_counts=counts,
    )
    log(f"{scenario.controller_type}: {n_sims} simulations, {aggregate.n_failed} failed, "
        f"mean phi {aggregate.phi['mean']}, {wall_clock:.2f}s on {workers} worker(s)")
    return aggregate


def run_deterministic_reference(scenario: Scenario) -> Optional[float]:
    """Phi of the noise-free plant under the scenario's controller; None if the run fails"""
    outcome = run_closed_loop(scenario.deterministic_variant(), 0, keep_trajectory=False)
    return None if outcome.failed else outcome.data.phi


def scaling_benchmark(
    scenario: Scenario,
    n_sims: int = 100,
    worker_counts: Sequence[int] = (1, 2, 4, 8),
    progress: bool = False,
    verbose: bool = False,
    logger_callback: Optional[Callable[[str], None]] = None,
) -> pd.DataFrame:
    """
    Wall clock of the same batch on each worker count.

    A single-worker run is added first when missing, since speedup(w) is
    T(1)/T(w). ``identical`` flags whether the Phi values match the
    single-worker run bit for bit.

    Returns:
        DataFrame with columns workers, wall_clock, speedup, efficiency, identical
    """
    counts = [int(w) for w in worker_counts]
    if any(w < 1 for w in counts):
        raise ValueError(f"worker counts must be >= 1, got {counts}")
    if 1 not in counts:
        counts = [1] + counts
    log = logger_callback if logger_callback else (print if verbose else lambda _: None)

    timings: Dict[int, Tuple[float, np.ndarray]] = {}
    for w in dict.fromkeys(counts):
        agg = run_monte_carlo(scenario, n_sims, workers=w, progress=progress)
        timings[w] = (agg.wall_clock, agg.phi_values)
        log(f"workers={w}: {agg.wall_clock:.2f}s")

    t1, phi1 = timings[1]
    rows = []
    for w in counts:
        wall, phi = timings[w]
        speedup = t1 / wall if wall > 0 else float("nan")
        rows.append({
            "workers": w,
            "wall_clock": wall,
            "speedup": 1.0 if w == 1 else speedup,
            "efficiency": (1.0 if w == 1 else speedup) / w,
            "identical": bool(np.array_equal(phi, phi1, equal_nan=True)),
        })
    return pd.DataFrame(rows, columns=["workers", "wall_clock", "speedup", "efficiency", "identical"])


@dataclass
class Comparison:
    nmpc: McAggregate
    pi: McAggregate
    paired: bool

    @property
    def mean_lower(self) -> Optional[bool]:
        a, b = self.nmpc.phi["mean"], self.pi.phi["mean"]
        return None if a is None or b is None else a < b

    @property
    def variance_lower(self) -> Optional[bool]:
        a, b = self.nmpc.phi["variance"], self.pi.phi["variance"]
        return None if a is None or b is None else a < b

    def to_dict(self, include_wall_clock: bool = True) -> Dict[str, object]:
        return {
            "paired_seeds": self.paired,
            "nmpc": self.nmpc.to_dict(include_wall_clock),
            "pi": self.pi.to_dict(include_wall_clock),
            "verdict": {
                "nmpc_mean_lower": self.mean_lower,
                "nmpc_variance_lower": self.variance_lower,
                "nmpc_outperforms": bool(self.mean_lower and self.variance_lower),
            },
        }


def compare_controllers(
    scenario: Scenario,
    n_sims: int,
    workers: int = 1,
    bins="fd",
    progress: bool = False,
    verbose: bool = False,
    logger_callback: Optional[Callable[[str], None]] = None,
) -> Comparison:
    """NMPC and PI batches over the same simulation indices, with the mean/variance verdict"""
    aggregates = {}
    for kind in ("nmpc", "pi"):
        aggregates[kind] = run_monte_carlo(
            scenario.with_controller(kind), n_sims, workers=workers, bins=bins,
            progress=progress, verbose=verbose, logger_callback=logger_callback,
        )
    return Comparison(nmpc=aggregates["nmpc"], pi=aggregates["pi"], paired=scenario.config.scenario.paired_seeds)
