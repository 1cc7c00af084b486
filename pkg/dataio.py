"""
Data access module for nestcast
Reads time-series CSV files, experiment grid files and saved reports.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import yaml

from errors import ConfigurationError, DataFormatError
from services.forecast_service import TimeSeriesDataset

logger = logging.getLogger(__name__)

# CSV dialect
CSV_SEPARATOR = ','
CSV_ENCODING = 'utf-8'
CONFIG_DIR = Path(__file__).resolve().parent / 'configs'

PathLike = Union[str, Path]


def read_table(path: PathLike) -> pd.DataFrame:
    """Read a headed CSV as strings so every cell can be diagnosed."""
    try:
        frame = pd.read_csv(path, sep=CSV_SEPARATOR, encoding=CSV_ENCODING, dtype=str,
                            keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError:
        raise DataFormatError(f"Cannot read {path}: file not found") from None
    except OSError as exc:
        raise DataFormatError(f"Cannot read {path}: {exc.strerror or exc}") from None
    except (UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataFormatError(f"Cannot parse {path}: {exc}") from None
    if frame.columns.duplicated().any():
        raise DataFormatError(f"Duplicate column names in {path}")
    return frame


def numeric_column(frame: pd.DataFrame, name: str) -> pd.Series:
    """
    Convert one column to floats.

    Raises:
        DataFormatError: with the 1-based file line of the first missing or
            non-numeric cell (line 1 is the header)
    """
    if name not in frame.columns:
        raise DataFormatError(f"Column not found; available: {', '.join(frame.columns)}", column=name)
    raw = frame[name].str.strip()
    empty = raw == ''
    if empty.any():
        row = int(empty.to_numpy().nonzero()[0][0])
        raise DataFormatError("Missing value", line=row + 2, column=name)
    values = pd.to_numeric(raw, errors='coerce')
    bad = ~np.isfinite(values.to_numpy(dtype=float))
    if bad.any():
        row = int(bad.nonzero()[0][0])
        raise DataFormatError(f"Non-numeric or non-finite value {frame[name].iloc[row]!r}", line=row + 2, column=name)
    return values.astype(float)


def load_dataset(path: PathLike, target: str, predictors: Sequence[str]) -> TimeSeriesDataset:
    """
    Build a dataset from a CSV file.

    Args:
        path: comma-separated file with a header row, rows in time order
        target: name of the forecast target column
        predictors: predictor columns, in the order their indices are used

    Returns:
        TimeSeriesDataset holding only the selected columns
    """
    frame = read_table(path)
    predictors = list(dict.fromkeys(predictors))
    if target in predictors:
        raise ConfigurationError(f"Target column {target!r} is also listed as a predictor.")
    y = numeric_column(frame, target).to_numpy()
    columns = [numeric_column(frame, name).to_numpy() for name in predictors]
    X = pd.DataFrame(dict(zip(predictors, columns))).to_numpy() if columns else None
    logger.info("loaded %s: T=%d, %d predictor(s)", path, y.size, len(predictors))
    return TimeSeriesDataset(y=y, X=X if X is not None else [], columns=tuple(predictors), target=target)


def resolve_config_path(path: PathLike) -> Path:
    """Paths that do not exist are looked up among the bundled configs."""
    candidate = Path(path)
    if candidate.exists():
        return candidate
    for bundled in (CONFIG_DIR / candidate.name, CONFIG_DIR / f"{candidate.name}.yaml"):
        if bundled.exists():
            return bundled
    raise ConfigurationError(f"Grid config {path} not found.")


def load_grid_config(path: PathLike) -> Dict:
    """Parse a YAML grid file into a plain mapping."""
    resolved = resolve_config_path(path)
    try:
        with open(resolved, encoding=CSV_ENCODING) as handle:
            raw = yaml.safe_load(handle)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"Invalid grid config {resolved}: {exc}") from None
    except OSError as exc:
        raise ConfigurationError(f"Cannot read grid config {resolved}: {exc.strerror or exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"Grid config {resolved} must be a mapping.")
    logger.debug("grid config %s: %s", resolved, sorted(raw))
    return raw


def bundled_configs() -> List[str]:
    return sorted(p.stem for p in CONFIG_DIR.glob('*.yaml'))


def write_text(path: Optional[PathLike], text: str) -> None:
    if path is None:
        return
    try:
        Path(path).write_text(text, encoding=CSV_ENCODING)
    except OSError as exc:
        raise ConfigurationError(f"Cannot write {path}: {exc.strerror or exc}") from None
