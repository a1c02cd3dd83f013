"""
Result files. Every file carries the effective config and base seed:
CSV files as leading ``# config: {...}`` and ``# seed: N`` comment lines,
JSON files as ``config`` and ``seed`` keys.
"""

import json
import threading
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

PathLike = Union[str, Path]

_WRITE_LOCK = threading.Lock()

TRAJECTORY_COLUMNS = ["t", "z", "zbar", "u", "y"]
RUNS_COLUMNS = ["sim_index", "controller", "seed", "phi", "n_ocps", "ocp_failures", "failed", "error"]
HISTOGRAM_COLUMNS = ["bin_left", "bin_right", "count"]
SPEEDUP_COLUMNS = ["workers", "wall_clock", "speedup", "efficiency", "identical"]


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def _clean(obj):
    """Non-finite floats become None so files stay strict JSON"""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not np.isfinite(obj):
        return None
    return obj


def write_json(path: PathLike, payload: Dict[str, Any], config: Dict[str, Any], seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = _clean({**payload, "seed": seed, "config": config})
    path.write_text(json.dumps(document, indent=2, default=_json_default) + "\n", encoding="utf-8")
    return path


def write_csv(path: PathLike, frame: pd.DataFrame, config: Dict[str, Any], seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config: {json.dumps(config, default=_json_default)}\n")
        fh.write(f"# seed: {seed}\n")
        frame.to_csv(fh, index=False)
    return path


def append_jsonl(entry: Dict[str, Any], jsonl_file: PathLike) -> None:
    """Append one record to a JSON-lines sink"""
    jsonl_file = Path(jsonl_file)
    jsonl_file.parent.mkdir(parents=True, exist_ok=True)
    with _WRITE_LOCK, open(jsonl_file, "a", encoding="utf-8") as fp:
        fp.write(json.dumps(_clean(entry), default=_json_default) + "\n")


def read_header(path: PathLike) -> Tuple[Optional[Dict[str, Any]], Optional[int]]:
    """(config, seed) from the comment header of a result CSV"""
    config, seed = None, None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            if line.startswith("# config:"):
                config = json.loads(line[len("# config:"):])
            elif line.startswith("# seed:"):
                seed = int(line[len("# seed:"):].strip())
    return config, seed


def read_csv(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def trajectory_frame(columns: Dict[str, np.ndarray]) -> pd.DataFrame:
    return pd.DataFrame({name: columns[name] for name in TRAJECTORY_COLUMNS})


def histogram_frame(edges: np.ndarray, counts: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame({"bin_left": edges[:-1], "bin_right": edges[1:], "count": counts.astype(int)})
