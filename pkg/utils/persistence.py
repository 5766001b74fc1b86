"""
CSV and JSON artifacts of the lab runs.

Floats are written with 17 significant digits so reports recomputed from the
files reproduce the in-memory values exactly.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from models.pde_solver import TimeSeries
from utils.errors import MissingArtifacts

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
SERIES_COLUMNS = ["t", "re_B", "im_B", "abs_B", "arg_B", "field_norm", "interior_norm"]


def artifact_name(kind: str, parity: str, epsilon: Optional[float] = None, suffix: str = "csv") -> str:
    """File names like series_odd_eps0.04.csv or prediction_even_eps0.02.json."""
    tag = f"_eps{epsilon:g}" if epsilon is not None else ""
    return f"{kind}_{parity}{tag}.{suffix}"


def ensure_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def series_frame(series: TimeSeries) -> pd.DataFrame:
    B = np.asarray(series.B_b)
    return pd.DataFrame({
        "t": series.times,
        "re_B": B.real,
        "im_B": B.imag,
        "abs_B": np.abs(B),
        "arg_B": np.angle(B),
        "field_norm": series.field_norm,
        "interior_norm": series.interior_norm,
    }, columns=SERIES_COLUMNS)


def write_time_series(path, series: TimeSeries) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    series_frame(series).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {len(series.times)} samples to {path}")
    return path


def read_time_series(path) -> TimeSeries:
    path = Path(path)
    if not path.exists():
        raise MissingArtifacts(f"Missing simulation output: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in SERIES_COLUMNS if c not in frame.columns]
    if missing:
        raise MissingArtifacts(f"{path} lacks columns {missing}")
    return TimeSeries(
        times=frame["t"].to_numpy(),
        B_b=frame["re_B"].to_numpy() + 1j * frame["im_B"].to_numpy(),
        field_norm=frame["field_norm"].to_numpy(),
        interior_norm=frame["interior_norm"].to_numpy(),
    )


def write_potential_table(path, x: np.ndarray, times: Sequence[float], values: np.ndarray) -> Path:
    """V0 samples with one row per x and one column per time."""
    path = Path(path)
    ensure_dir(path.parent)
    columns = [f"t={t:.17g}" for t in times]
    frame = pd.DataFrame(np.asarray(values).T, columns=columns)
    frame.insert(0, "x", x)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote potential table {frame.shape} to {path}")
    return path


def write_table(path, rows: Sequence[Dict]) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    pd.DataFrame(list(rows)).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_json(path, data: Dict) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_to_builtin) + "\n")
    logger.info(f"Wrote {path}")
    return path


def read_json(path) -> Dict:
    path = Path(path)
    if not path.exists():
        raise MissingArtifacts(f"Missing artifact: {path}")
    return json.loads(path.read_text())


def _to_builtin(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    raise TypeError(f"Cannot serialize {type(value).__name__}")
