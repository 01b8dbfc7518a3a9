"""
Artifact files: trace.csv, counts.csv, summary.json and sweep.csv.

Floats are written with %.17g so a trace read back is bit-identical to the
one written, and JSON keys are sorted so repeated runs produce identical
bytes.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

import numpy as np
import pandas as pd

from .detectors import CountSeries, TimeSeries
from .errors import ArtifactError, ConfigError, SchemaError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
TRACE_COLUMNS = ('time_s', 'value')
COUNTS_COLUMNS = ('window_index', 'counts')


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        # JSON has no inf/nan
        return value if math.isfinite(value) else None
    return obj


def to_json(summary: Dict[str, Any]) -> str:
    """Deterministic JSON text of a summary"""
    return json.dumps(_jsonable(summary), sort_keys=True, indent=2) + '\n'


# ==================================
# WRITING
# ==================================

def prepare_output_dir(out_dir: Path, names: Iterable[str], force: bool = False) -> Path:
    """
    Create the output directory and check that no artifact would be overwritten

    Raises:
        ArtifactError: an artifact exists and force is not set, or the
            directory cannot be created
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ArtifactError(f"cannot create output directory {out_dir}: {e}")
    if not force:
        existing = sorted(name for name in names if (out_dir / name).exists())
        if existing:
            raise ArtifactError(
                f"refusing to overwrite {', '.join(existing)} in {out_dir}; pass --force"
            )
    return out_dir


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding='utf-8')
    except OSError as e:
        raise ArtifactError(f"cannot write {path}: {e}")


def _write_frame(path: Path, frame: pd.DataFrame) -> None:
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    except OSError as e:
        raise ArtifactError(f"cannot write {path}: {e}")


def write_result(result, out_dir: Path, force: bool = False) -> Dict[str, Path]:
    """
    Write the artifacts of a ScenarioResult

    Returns:
        Mapping of artifact name to written path
    """
    frames = {}
    if result.trace is not None:
        frames['trace.csv'] = result.trace
    if result.counts is not None:
        frames['counts.csv'] = result.counts
    names = list(frames) + ['summary.json']
    out_dir = prepare_output_dir(out_dir, names, force)

    written = {}
    for name, frame in frames.items():
        _write_frame(out_dir / name, frame)
        written[name] = out_dir / name
    _write_text(out_dir / 'summary.json', to_json(result.summary))
    written['summary.json'] = out_dir / 'summary.json'
    logger.info(f"Wrote {', '.join(sorted(written))} to {out_dir}")
    return written


def write_sweep(frame: pd.DataFrame, out_dir: Path, force: bool = False) -> Path:
    out_dir = prepare_output_dir(out_dir, ['sweep.csv'], force)
    path = out_dir / 'sweep.csv'
    _write_frame(path, frame)
    logger.info(f"Wrote sweep of {len(frame)} points to {path}")
    return path


def write_trace(series: TimeSeries, path: Path) -> None:
    """Write a TimeSeries in the trace schema"""
    _write_frame(Path(path), pd.DataFrame({'time_s': series.times(), 'value': series.samples}))


def write_counts(series: CountSeries, path: Path) -> None:
    """Write a CountSeries in the counts schema"""
    frame = pd.DataFrame({'window_index': np.arange(len(series), dtype=np.int64), 'counts': series.counts})
    _write_frame(Path(path), frame)


# ==================================
# READING
# ==================================

def read_series(path: Path, window_s: Optional[float] = None) -> Union[TimeSeries, CountSeries]:
    """
    Read a trace.csv or counts.csv

    Args:
        path: CSV file
        window_s: counting window, required for counts files

    Returns:
        TimeSeries for the trace schema, CountSeries for the counts schema

    Raises:
        ArtifactError: file missing or unreadable
        SchemaError: empty file, unknown columns or non-uniform sampling
    """
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"no such file: {path}")
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except pd.errors.EmptyDataError:
        raise SchemaError(f"{path} is empty")
    except (OSError, pd.errors.ParserError) as e:
        raise ArtifactError(f"cannot read {path}: {e}")

    columns = tuple(frame.columns)
    if frame.empty:
        raise SchemaError(f"{path} has no rows")
    if columns == TRACE_COLUMNS:
        try:
            return TimeSeries.from_times(frame['time_s'].to_numpy(float), frame['value'].to_numpy(float))
        except (ConfigError, ValueError) as e:
            raise SchemaError(f"{path}: {e}")
    if columns == COUNTS_COLUMNS:
        if window_s is None or not window_s > 0:
            raise SchemaError(f"{path} holds counts; a positive window length is required")
        index = frame['window_index'].to_numpy()
        if not np.array_equal(index, np.arange(len(frame))):
            raise SchemaError(f"{path}: window_index must run 0, 1, 2, ...")
        counts = frame['counts'].to_numpy()
        if not np.issubdtype(counts.dtype, np.integer) or (counts < 0).any():
            raise SchemaError(f"{path}: counts must be non-negative integers")
        return CountSeries(float(window_s), counts, 0)
    raise SchemaError(
        f"{path}: columns {list(columns)} match neither {list(TRACE_COLUMNS)} nor {list(COUNTS_COLUMNS)}"
    )


def read_summary(path: Path) -> Dict[str, Any]:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding='utf-8'))
    except OSError as e:
        raise ArtifactError(f"cannot read {path}: {e}")
    except json.JSONDecodeError as e:
        raise ArtifactError(f"{path} is not valid JSON: {e}")
