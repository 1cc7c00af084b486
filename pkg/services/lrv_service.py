"""
LRV Service Module - Long-run variance of the squared-error process
Homoskedastic and Newey-West (Bartlett kernel) estimators of sigma^2.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from errors import ConfigurationError, DegenerateVarianceError
from services.forecast_service import (
    NestedModelSpec, TimeSeriesDataset, fit_large_model_residuals, generate_errors
)

logger = logging.getLogger(__name__)

HOMOSKEDASTIC = 'homoskedastic'
NEWEY_WEST = 'newey_west'
AUTO = 'auto'
VARIANCE_FLOOR = 1e-12

# short names accepted on the command line and in grid files
METHOD_ALIASES = {
    'hom': HOMOSKEDASTIC,
    'homoskedastic': HOMOSKEDASTIC,
    'nw': NEWEY_WEST,
    'newey_west': NEWEY_WEST,
}


@dataclass(frozen=True)
class LrvEstimate:
    sigma2: float
    method: str
    bandwidth: int
    n_used: int
    degenerate: bool = False


def normalize_method(method: str) -> str:
    """Map 'hom'/'nw' aliases onto canonical method names."""
    try:
        return METHOD_ALIASES[str(method).lower()]
    except KeyError:
        raise ConfigurationError(f"Unknown long-run variance method {method!r} (use hom or nw).") from None


def auto_bandwidth(n: int) -> int:
    """Bartlett rule m = floor(4 (n/100)^(2/9))."""
    return int(np.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


def eta_series(data: TimeSeriesDataset, spec: NestedModelSpec, residual_source: str = 'full_sample') -> np.ndarray:
    """
    Demeaned squared residuals over the out-of-sample range.

    Args:
        data: dataset with rows (x_t, y_t)
        spec: nested model pair; the large model supplies the residuals
        residual_source: 'full_sample' for residuals of the large model fit on
            all pairs, 'recursive' for its out-of-sample forecast errors

    Returns:
        vector of length P, centred on its own mean
    """
    if residual_source == 'full_sample':
        residuals = fit_large_model_residuals(data, spec)
        k0 = spec.k0(data.T)
        squared = residuals[k0 - 1:] ** 2
    elif residual_source == 'recursive':
        squared = generate_errors(data, spec).e2 ** 2
    else:
        raise ConfigurationError(f"Unknown residual source {residual_source!r}.")
    return squared - squared.mean()


def sigma2_hom(eta) -> LrvEstimate:
    """Mean of squares of eta."""
    eta = np.asarray(eta, dtype=float).ravel()
    if eta.size < 2:
        raise ConfigurationError("Homoskedastic variance needs at least two observations.")
    sigma2 = autocovariance(eta, 0)
    if sigma2 <= 0.0:
        raise DegenerateVarianceError("homoskedastic variance estimate is zero")
    return LrvEstimate(sigma2=sigma2, method=HOMOSKEDASTIC, bandwidth=0, n_used=int(eta.size))


def autocovariance(eta: np.ndarray, lag: int) -> float:
    """(1/n) sum_{t>lag} eta_t eta_{t-lag}, no demeaning."""
    n = eta.size
    return float(np.dot(eta[lag:], eta[:n - lag]) / n)


def sigma2_nw(eta, bandwidth: Union[int, str, None] = AUTO, allow_degenerate: bool = False) -> LrvEstimate:
    """
    Newey-West estimate with Bartlett weights 1 - j/(m+1).

    Args:
        eta: centred series
        bandwidth: lag truncation m, or 'auto' / None for the Bartlett rule
        allow_degenerate: floor nonpositive estimates at 1e-12 and flag them
            instead of raising

    Returns:
        LrvEstimate
    """
    eta = np.asarray(eta, dtype=float).ravel()
    n = eta.size
    if n < 4:
        raise ConfigurationError("Newey-West variance needs at least four observations.")
    m = auto_bandwidth(n) if bandwidth in (AUTO, None) else int(bandwidth)
    if m < 0 or m >= n:
        raise ConfigurationError(f"Bandwidth must lie in [0, {n - 1}], got {m}.")

    raw = autocovariance(eta, 0)
    for j in range(1, m + 1):
        raw += 2.0 * (1.0 - j / (m + 1.0)) * autocovariance(eta, j)

    if raw <= 0.0:
        if not allow_degenerate:
            raise DegenerateVarianceError(f"Newey-West variance estimate {raw:.3g} is not positive")
        logger.warning("Newey-West estimate %.3g floored at %g", raw, VARIANCE_FLOOR)
        return LrvEstimate(sigma2=VARIANCE_FLOOR, method=NEWEY_WEST, bandwidth=m, n_used=n, degenerate=True)
    return LrvEstimate(sigma2=float(raw), method=NEWEY_WEST, bandwidth=m, n_used=n)


def estimate_lrv(eta, method: str, bandwidth: Optional[Union[int, str]] = AUTO) -> LrvEstimate:
    """Dispatch on the method name."""
    method = normalize_method(method)
    if method == HOMOSKEDASTIC:
        return sigma2_hom(eta)
    return sigma2_nw(eta, bandwidth)
