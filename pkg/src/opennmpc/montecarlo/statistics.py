"""Aggregation of per-simulation results, always in simulation-index order."""

from collections import Counter
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np
from scipy import stats as sps

from opennmpc.montecarlo.closed_loop import ClosedLoopResult

DECILES = tuple(round(0.1 * k, 1) for k in range(1, 10))


def summarize_phi(values: Sequence[float]) -> Dict[str, object]:
    """Mean, variance, extremes and deciles of the finite Phi values"""
    phi = np.asarray([v for v in values if np.isfinite(v)], dtype=np.float64)
    if phi.size == 0:
        return {"count": 0, "mean": None, "variance": None, "std": None, "min": None, "max": None,
                "skewness": None, "deciles": {}}
    desc = sps.describe(phi) if phi.size > 1 else None
    quantiles = np.quantile(phi, DECILES)
    return {
        "count": int(phi.size),
        "mean": float(np.mean(phi)),
        "variance": float(np.var(phi, ddof=1)) if phi.size > 1 else 0.0,
        "std": float(np.std(phi, ddof=1)) if phi.size > 1 else 0.0,
        "min": float(np.min(phi)),
        "max": float(np.max(phi)),
        "skewness": float(desc.skewness) if desc is not None and np.isfinite(desc.skewness) else None,
        "deciles": {f"{q:.1f}": float(v) for q, v in zip(DECILES, quantiles)},
    }


def ocp_table(results: Iterable[ClosedLoopResult]) -> Dict[str, object]:
    """OCP counts, success percentage and solver effort over a batch"""
    totals = Counter()
    max_sqp = 0
    for res in results:
        totals.update(res.stats)
        max_sqp = max(max_sqp, res.max_sqp_iterations)
    n_ocps = totals.get("ocps", 0)
    failures = totals.get("ocp_failures", 0)
    return {
        "total_ocps": int(n_ocps),
        "successful_ocps": int(n_ocps - failures),
        "failed_ocps": int(failures),
        "percentage_success": 100.0 * (n_ocps - failures) / n_ocps if n_ocps else None,
        "mean_sqp_iterations": totals.get("sqp_iterations", 0) / n_ocps if n_ocps else None,
        "max_sqp_iterations": int(max_sqp),
        "mean_qp_iterations": totals.get("qp_iterations", 0) / n_ocps if n_ocps else None,
        "hessian_resets": int(totals.get("hessian_resets", 0)),
        "line_search_exhaustions": int(totals.get("line_search_exhaustions", 0)),
        "status_counts": {k[len("status_"):]: int(v) for k, v in sorted(totals.items()) if k.startswith("status_")},
    }


def histogram(values: Sequence[float], bins: Union[str, int] = "fd"):
    """(edges, counts) of the finite values; a numpy rule name or a bin count"""
    phi = np.asarray([v for v in values if np.isfinite(v)], dtype=np.float64)
    if phi.size == 0:
        return np.array([0.0, 1.0]), np.array([0])
    edges = np.histogram_bin_edges(phi, bins=bins)
    counts, edges = np.histogram(phi, bins=edges)
    return edges, counts


def collect_unconverged(results: Iterable[ClosedLoopResult]) -> List[dict]:
    """Final residuals of every non-converged OCP, tagged with its simulation"""
    out = []
    for res in results:
        for entry in res.unconverged:
            out.append({"sim_index": res.sim_index, **entry})
    return out
