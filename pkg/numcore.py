"""
Numerical core module for nestcast
Normal distribution helpers, reproducible random streams and the small dense
least-squares routines used by the recursive forecasting scheme.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import ndtr, ndtri

from errors import ConfigurationError, DomainError, SingularMatrixError

logger = logging.getLogger(__name__)

# Numerical configuration
SINGULAR_PIVOT_RTOL = 1e-10
RNG_ALGORITHM = 'PCG64'


def std_normal_cdf(x):
    """Standard normal CDF; accepts scalars or arrays."""
    return ndtr(x)


def validate_probability(p: float) -> Tuple[bool, str]:
    """
    Check that p lies strictly inside (0, 1).

    Returns:
        tuple: (valid: bool, message: str)
    """
    if not np.isfinite(p):
        return False, "Probability must be finite."
    if p <= 0.0 or p >= 1.0:
        return False, f"Probability must lie in (0, 1), got {p}."
    return True, "ok"


def std_normal_quantile(p: float) -> float:
    """
    Inverse of the standard normal CDF.

    Raises:
        DomainError: p outside (0, 1)
    """
    valid, message = validate_probability(p)
    if not valid:
        raise DomainError(message)
    return float(ndtri(p))


def as_matrix(values, name: str = "X") -> np.ndarray:
    """Coerce to a finite 2-D float array (a column vector for 1-D input)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ConfigurationError(f"{name} must be two-dimensional, got shape {arr.shape}.")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} contains non-finite entries.")
    return arr


def leading_pivots(gram: np.ndarray) -> np.ndarray:
    """
    Gaussian-elimination pivots of one Gram matrix or a stack of them.

    Pivot k equals det(G[:k+1, :k+1]) / det(G[:k, :k]); nonpositive
    determinants come back as zero pivots.
    """
    gram = np.asarray(gram, dtype=float)
    p = gram.shape[-1]
    pivots = np.empty(gram.shape[:-2] + (p,))
    previous = np.zeros(gram.shape[:-2])
    for k in range(1, p + 1):
        sign, logdet = np.linalg.slogdet(gram[..., :k, :k])
        with np.errstate(invalid='ignore', over='ignore'):
            step = np.exp(logdet - previous)
        pivots[..., k - 1] = np.where(sign > 0, step, 0.0)
        previous = np.where(sign > 0, logdet, np.inf)
    return np.nan_to_num(pivots, nan=0.0, posinf=np.inf)


def _first_singular_pivot(gram: np.ndarray) -> np.ndarray:
    """Index of the first pivot below tolerance per matrix, -1 if none."""
    pivots = leading_pivots(gram)
    scale = np.max(np.diagonal(gram, axis1=-2, axis2=-1), axis=-1)
    tol = SINGULAR_PIVOT_RTOL * np.maximum(scale, np.finfo(float).tiny)
    bad = pivots < tol[..., None]
    return np.where(bad.any(axis=-1), np.argmax(bad, axis=-1), -1)


def ols_solve(X, y) -> np.ndarray:
    """
    Least-squares coefficients of y on the columns of X.

    Args:
        X: design matrix, n x p with n >= p
        y: target vector of length n

    Returns:
        numpy array of p coefficients

    Raises:
        SingularMatrixError: X'X has a pivot below the relative tolerance
    """
    X = as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if y.shape[0] != n:
        raise ConfigurationError(f"y has {y.shape[0]} rows, X has {n}.")
    if n < p:
        raise SingularMatrixError("fewer rows than columns", pivot=n)
    gram = X.T @ X
    bad = int(_first_singular_pivot(gram))
    if bad >= 0:
        logger.debug("singular Gram matrix, pivot %d", bad)
        raise SingularMatrixError("singular Gram matrix", pivot=bad)
    return np.linalg.solve(gram, X.T @ y)


def recursive_ols_path(X, y, t_start: int) -> np.ndarray:
    """
    Growing-window OLS coefficients for t = t_start..n.

    Moments are accumulated row by row and every window is solved directly,
    so row i of the result equals ols_solve(X[:t_start + i], y[:t_start + i]).

    Returns:
        array of shape (n - t_start + 1, p)
    """
    X = as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if y.shape[0] != n:
        raise ConfigurationError(f"y has {y.shape[0]} rows, X has {n}.")
    if t_start < p or t_start > n:
        raise ConfigurationError(f"t_start must lie in [{p}, {n}], got {t_start}.")

    grams = np.cumsum(X[:, :, None] * X[:, None, :], axis=0)[t_start - 1:]
    moments = np.cumsum(X * y[:, None], axis=0)[t_start - 1:]

    bad = _first_singular_pivot(grams)
    offenders = np.flatnonzero(bad >= 0)
    if offenders.size:
        first = int(offenders[0])
        raise SingularMatrixError("singular Gram matrix", pivot=int(bad[first]), t=t_start + first)
    return np.linalg.solve(grams, moments[..., None])[..., 0]


@dataclass(frozen=True)
class RngStream:
    """
    Reproducible random stream identified by (seed, stream[, substream path]).

    Replaying the same identifiers gives bitwise identical draws; distinct
    identifiers give independent streams through SeedSequence spawn keys.
    """
    seed: int
    stream: int = 0
    substream: Tuple[int, ...] = ()
    algorithm: str = RNG_ALGORITHM

    def generator(self) -> np.random.Generator:
        if self.algorithm != RNG_ALGORITHM:
            raise ConfigurationError(f"Unsupported RNG algorithm {self.algorithm!r}.")
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream),) + self.substream)
        return np.random.Generator(np.random.PCG64(seq))

    def spawn_child(self, index: int) -> 'RngStream':
        return RngStream(self.seed, self.stream, self.substream + (int(index),), self.algorithm)
