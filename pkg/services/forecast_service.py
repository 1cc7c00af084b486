"""
Forecast Service Module - Recursive out-of-sample forecast errors
Builds the pseudo out-of-sample error sequences of a nested model pair under
the expanding-window scheme.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigurationError, SingularMatrixError
from numcore import as_matrix, ols_solve, recursive_ols_path

logger = logging.getLogger(__name__)

WARMUP_BUFFER = 5
MIN_OUT_OF_SAMPLE = 10


@dataclass(frozen=True)
class TimeSeriesDataset:
    """
    Target and predictors in natural time order.

    Row t holds (x_t, y_t); the forecast of y_{t+1} uses x_t.
    """
    y: np.ndarray
    X: np.ndarray
    columns: Tuple[str, ...] = ()
    target: str = "y"

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = as_matrix(self.X) if np.size(self.X) else np.zeros((y.shape[0], 0))
        if X.shape[0] != y.shape[0]:
            raise ConfigurationError(f"y has {y.shape[0]} rows, X has {X.shape[0]}.")
        if not np.all(np.isfinite(y)):
            raise ConfigurationError("y contains non-finite entries.")
        columns = tuple(self.columns) or tuple(f"x{i + 1}" for i in range(X.shape[1]))
        if len(columns) != X.shape[1]:
            raise ConfigurationError(f"{len(columns)} column names for {X.shape[1]} predictors.")
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'X', X)
        object.__setattr__(self, 'columns', columns)

    @property
    def T(self) -> int:
        return int(self.y.shape[0])

    def scaled(self, c: float) -> 'TimeSeriesDataset':
        """Copy with the target multiplied by c."""
        return TimeSeriesDataset(self.y * c, self.X, self.columns, self.target)


@dataclass(frozen=True)
class NestedModelSpec:
    """Column indices of the small model and the extra columns of the large one."""
    idx1: Tuple[int, ...] = ()
    idx2_extra: Tuple[int, ...] = (0,)
    include_intercept: bool = False
    pi0: float = 0.25

    @property
    def p(self) -> int:
        return len(self.idx1) + len(self.idx2_extra) + int(self.include_intercept)

    def k0(self, T: int) -> int:
        return int(np.floor(T * self.pi0 + 1e-12))


@dataclass(frozen=True)
class ForecastErrorPair:
    """Aligned out-of-sample errors of the small (e1) and large (e2) model."""
    k0: int
    e1: np.ndarray
    e2: np.ndarray
    model_columns: Tuple[Tuple[str, ...], Tuple[str, ...]] = field(default=((), ()))

    def __post_init__(self):
        e1 = np.asarray(self.e1, dtype=float).ravel()
        e2 = np.asarray(self.e2, dtype=float).ravel()
        if e1.shape != e2.shape:
            raise ConfigurationError(f"e1 and e2 lengths differ: {e1.size} vs {e2.size}.")
        if e1.size < 2:
            raise ConfigurationError("At least two out-of-sample errors are required.")
        object.__setattr__(self, 'e1', e1)
        object.__setattr__(self, 'e2', e2)

    @property
    def P(self) -> int:
        return int(self.e1.size)


def validate_model_spec(spec: NestedModelSpec, n_columns: int) -> Tuple[bool, str]:
    """
    Check a nested model specification against the available predictors.

    Returns:
        tuple: (valid: bool, message: str)
    """
    if not spec.idx2_extra:
        return False, "The large model needs at least one extra predictor."
    if set(spec.idx1) & set(spec.idx2_extra):
        return False, "Small-model and extra predictor columns overlap."
    if len(set(spec.idx1)) != len(spec.idx1) or len(set(spec.idx2_extra)) != len(spec.idx2_extra):
        return False, "Predictor columns must not repeat."
    for idx in spec.idx1 + spec.idx2_extra:
        if idx < 0 or idx >= n_columns:
            return False, f"Predictor column {idx} out of range (dataset has {n_columns})."
    if not 0.0 < spec.pi0 < 1.0:
        return False, f"pi0 must lie strictly inside (0, 1), got {spec.pi0}."
    return True, "ok"


def _design(data: TimeSeriesDataset, columns: Sequence[int], intercept: bool) -> np.ndarray:
    parts = []
    if intercept:
        parts.append(np.ones((data.T, 1)))
    if columns:
        parts.append(data.X[:, list(columns)])
    if not parts:
        return np.zeros((data.T, 0))
    return np.hstack(parts)


def _check_origin(data: TimeSeriesDataset, spec: NestedModelSpec) -> int:
    valid, message = validate_model_spec(spec, data.X.shape[1])
    if not valid:
        raise ConfigurationError(message)
    k0 = spec.k0(data.T)
    if k0 < spec.p + WARMUP_BUFFER:
        raise ConfigurationError(
            f"Forecast origin k0={k0} too small for {spec.p} parameters (need >= {spec.p + WARMUP_BUFFER})."
        )
    if data.T - k0 < MIN_OUT_OF_SAMPLE:
        raise ConfigurationError(f"Only {data.T - k0} out-of-sample forecasts (need >= {MIN_OUT_OF_SAMPLE}).")
    return k0


def _recursive_errors(Z: np.ndarray, y_next: np.ndarray, k0: int) -> np.ndarray:
    """
    Errors y_{t+1} - x_t'coef_t for t = k0..T-1 (one-based), coef_t fit on
    the t - 1 pairs seen by origin t. Pair m (zero-based) is (x_m, y_{m+1})
    in row terms. A singular fit is reported at its forecast origin.
    """
    n_pairs = y_next.shape[0]
    targets = y_next[k0 - 1:]
    if Z.shape[1] == 0:
        return targets.copy()
    # fit on the first m pairs predicts pair m, m = k0-1 .. n_pairs-1
    try:
        coefs = recursive_ols_path(Z[:n_pairs - 1], y_next[:n_pairs - 1], k0 - 1)
    except SingularMatrixError as exc:
        raise SingularMatrixError("singular Gram matrix", pivot=exc.pivot, t=exc.t + 1) from None
    return targets - np.einsum('ij,ij->i', Z[k0 - 1:], coefs)


def generate_errors(data: TimeSeriesDataset, spec: NestedModelSpec) -> ForecastErrorPair:
    """
    Recursive one-step-ahead forecast errors of both models.

    Args:
        data: dataset with rows (x_t, y_t)
        spec: nested model pair and forecast origin fraction

    Returns:
        ForecastErrorPair with P = T - floor(T * pi0) errors per model

    Raises:
        ConfigurationError: invalid specification or too short a warm-up
        SingularMatrixError: collinear predictors at some forecast origin
    """
    k0 = _check_origin(data, spec)
    Z1 = _design(data, spec.idx1, spec.include_intercept)[:-1]
    Z2 = _design(data, spec.idx1 + spec.idx2_extra, spec.include_intercept)[:-1]
    y_next = data.y[1:]

    e1 = _recursive_errors(Z1, y_next, k0)
    e2 = _recursive_errors(Z2, y_next, k0)
    logger.debug("generated %d forecast errors from origin k0=%d", e1.size, k0)

    names1 = (("const",) if spec.include_intercept else ()) + tuple(data.columns[i] for i in spec.idx1)
    names2 = names1 + tuple(data.columns[i] for i in spec.idx2_extra)
    return ForecastErrorPair(k0=k0, e1=e1, e2=e2, model_columns=(names1, names2))


def fit_large_model_residuals(data: TimeSeriesDataset, spec: NestedModelSpec) -> np.ndarray:
    """Full-sample residuals y_t - x_{t-1}'coef of the large model, t = 2..T."""
    valid, message = validate_model_spec(spec, data.X.shape[1])
    if not valid:
        raise ConfigurationError(message)
    Z2 = _design(data, spec.idx1 + spec.idx2_extra, spec.include_intercept)[:-1]
    y_next = data.y[1:]
    coef = ols_solve(Z2, y_next)
    return y_next - Z2 @ coef


def loss_sequences(pair: ForecastErrorPair) -> Tuple[np.ndarray, np.ndarray]:
    """Squared forecast errors (e1sq, e2sq)."""
    return pair.e1 ** 2, pair.e2 ** 2


def columns_to_indices(data: TimeSeriesDataset, names: Optional[List[str]]) -> Tuple[int, ...]:
    """Translate predictor column names to indices."""
    if not names:
        return ()
    missing = [name for name in names if name not in data.columns]
    if missing:
        raise ConfigurationError(f"Unknown predictor column(s): {', '.join(missing)}.")
    return tuple(data.columns.index(name) for name in names)
