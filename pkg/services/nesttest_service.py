"""
Nested Test Service Module - Overlapping-segment MSE-spread statistics
Null variances, the S0 / S-bar statistics and their adjusted versions, the
DM and CW baselines, and the run_test pipeline tying them together.
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple, Union

import numpy as np

from errors import ConfigurationError, DegenerateVarianceError, NestcastError, SegmentIndexError
from numcore import RngStream, std_normal_cdf, std_normal_quantile, validate_probability
from services.forecast_service import (
    ForecastErrorPair, NestedModelSpec, TimeSeriesDataset, generate_errors, loss_sequences
)
from services.lrv_service import LrvEstimate, estimate_lrv, eta_series, normalize_method

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.10
SEGMENT_EPS = 1e-9

S0 = 's0'
SBAR = 'sbar'
S0_ADJ = 's0_adj'
SBAR_ADJ = 'sbar_adj'
DM = 'dm'
CW = 'cw'
VARIANTS = (S0, SBAR, S0_ADJ, SBAR_ADJ, DM, CW)
SEGMENT_VARIANTS = (S0, SBAR, S0_ADJ, SBAR_ADJ)


@dataclass(frozen=True)
class SpreadConfig:
    variant: str = SBAR_ADJ
    lambda1: float = 1.0
    lambda2: float = 0.9
    tau0: float = 0.8
    lrv_method: str = 'nw'
    alpha: float = DEFAULT_ALPHA
    nw_bandwidth: Union[int, str] = 'auto'
    residual_source: str = 'full_sample'

    @property
    def adjusted(self) -> bool:
        return self.variant in (S0_ADJ, SBAR_ADJ)

    @property
    def family(self) -> str:
        """'s0', 'sbar' or the baseline name."""
        return self.variant.replace('_adj', '')

    def label(self) -> str:
        if self.family == S0:
            return f"{self.variant}({self.lambda1:g},{self.lambda2:g})"
        if self.family == SBAR:
            return f"{self.variant}({self.tau0:g},{self.lambda2:g})"
        return self.variant


PRESETS: Dict[str, SpreadConfig] = {
    S0: SpreadConfig(variant=S0, lambda1=1.0, lambda2=0.9),
    S0_ADJ: SpreadConfig(variant=S0_ADJ, lambda1=1.0, lambda2=0.9),
    SBAR: SpreadConfig(variant=SBAR, tau0=0.8, lambda2=0.9),
    SBAR_ADJ: SpreadConfig(variant=SBAR_ADJ, tau0=0.8, lambda2=0.9),
}


def preset(name: str) -> SpreadConfig:
    """Recommended parameterization for a statistic family."""
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"No preset named {name!r}.") from None


def validate_spread_config(config: SpreadConfig) -> Tuple[bool, str]:
    """
    Check a statistic configuration before any computation.

    Returns:
        tuple: (valid: bool, message: str)
    """
    if config.variant not in VARIANTS:
        return False, f"Unknown variant {config.variant!r}; choose from {', '.join(VARIANTS)}."
    valid, message = validate_probability(config.alpha)
    if not valid:
        return False, f"alpha: {message}"
    if config.family == S0:
        for name, value in (('lambda1', config.lambda1), ('lambda2', config.lambda2)):
            if not 0.0 < value <= 1.0:
                return False, f"{name} must lie in (0, 1], got {value}."
        if config.lambda1 == config.lambda2:
            return False, "variance degeneracy: lambda1 == lambda2"
    elif config.family == SBAR:
        if not 0.0 < config.lambda2 <= 1.0:
            return False, f"lambda2 must lie in (0, 1], got {config.lambda2}."
        if not 0.0 <= config.tau0 < 1.0:
            return False, f"tau0 must lie in [0, 1), got {config.tau0}."
    try:
        normalize_method(config.lrv_method)
    except ConfigurationError as exc:
        return False, str(exc)
    return True, "ok"


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    statistic: float
    variance_used: float
    sigma2: float
    p_value: float
    reject: bool
    k0: int
    P: int
    config: SpreadConfig
    bandwidth: int = 0
    T: Optional[int] = None
    pi0: Optional[float] = None

    def to_report_dict(self) -> Dict:
        """Flat document written by the test command."""
        return {
            'statistic': self.statistic,
            'p_value': self.p_value,
            'reject': self.reject,
            'variant': self.config.variant,
            'lambda1': self.config.lambda1,
            'lambda2': self.config.lambda2,
            'tau0': self.config.tau0,
            'pi0': self.pi0,
            'sigma2': self.sigma2,
            'lrv': normalize_method(self.config.lrv_method),
            'bandwidth': self.bandwidth,
            'T': self.T,
            'k0': self.k0,
            'P': self.P,
        }


# --- null variances -------------------------------------------------------

def v0(lambda1: float, lambda2: float) -> float:
    """|l1 - l2| / (l1 l2), the null variance of the two-segment spread."""
    if not (0.0 < lambda1 <= 1.0 and 0.0 < lambda2 <= 1.0):
        raise ConfigurationError(f"lambda1, lambda2 must lie in (0, 1], got ({lambda1}, {lambda2}).")
    if lambda1 == lambda2:
        raise DegenerateVarianceError("variance degeneracy: lambda1 == lambda2")
    return abs(lambda1 - lambda2) / (lambda1 * lambda2)


def vbar(tau0: float, lambda2: float) -> float:
    """
    Null variance of the segment-averaged spread.

    Three closed-form branches: tau0 == 0, lambda2 <= tau0 and lambda2 > tau0.
    """
    if not 0.0 <= tau0 < 1.0:
        raise ConfigurationError(f"tau0 must lie in [0, 1), got {tau0}.")
    if not 0.0 < lambda2 <= 1.0:
        raise ConfigurationError(f"lambda2 must lie in (0, 1], got {lambda2}.")
    lam, tau = lambda2, tau0
    if tau == 0.0:
        value = (1.0 + 2.0 * lam * np.log(lam)) / lam
    elif lam <= tau:
        value = ((1.0 - tau) ** 2 + 2.0 * lam * (1.0 - tau + np.log(tau))) / (lam * (1.0 - tau) ** 2)
    else:
        value = (1.0 - tau ** 2 + 2.0 * lam * ((1.0 - tau) * np.log(lam) + tau * np.log(tau))) / (
            lam * (1.0 - tau) ** 2)
    if value <= 0.0:
        raise DegenerateVarianceError(f"vbar({tau0}, {lambda2}) = {value:.3g} is not positive")
    return float(value)


def _average_weights(tau0: float, n_steps: int) -> np.ndarray:
    """Trapezoid weights of the [tau0, 1] average over the grid points k / n_steps."""
    lo = int(np.ceil(tau0 * n_steps - SEGMENT_EPS))
    upper = np.arange(max(lo, 1), n_steps + 1) - 1
    weights = np.zeros(n_steps)
    weights[upper] = 1.0
    weights[upper[[0, -1]]] = 0.5
    if lo == 0:
        # cell (0, 1/n] enters through E[int W(s)/s ds | W(1/n)] = W(1/n)
        weights[upper[0]] += 1.0
    return weights / weights.sum()


def _grid_index(fraction: float, n_steps: int) -> int:
    return max(1, int(round(fraction * n_steps))) - 1


def _spread_moments(first_weights: np.ndarray, second_index: np.ndarray, n_paths: int, n_steps: int,
                    seed: int, chunk: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Variance and standard error of every (first, second) pairing, all cells
    evaluated on the same Brownian paths.

    first_weights has one column per first functional and already carries the
    1/s factor; second_index picks the W(l2)/l2 grid points.
    """
    grid = np.arange(1, n_steps + 1) / n_steps
    shape = (first_weights.shape[1], second_index.size)
    sums = [np.zeros(shape) for _ in range(4)]
    done = 0
    while done < n_paths:
        size = min(chunk, n_paths - done)
        rng = RngStream(seed, done // chunk).generator()
        W = np.cumsum(rng.standard_normal((size, n_steps)), axis=1) / np.sqrt(n_steps)
        first = W @ first_weights
        second = W[:, second_index] / grid[second_index]
        x = first[:, :, None] - second[:, None, :]
        power = np.ones_like(x)
        for k in range(4):
            power *= x
            sums[k] += power.sum(axis=0)
        done += size

    m1, m2, m3, m4 = (s / n_paths for s in sums)
    variance = m2 - m1 ** 2
    mu4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 ** 2 * m2 - 3.0 * m1 ** 4
    se = np.sqrt(np.maximum(mu4 - variance ** 2, 0.0) / n_paths)
    return variance, se


def simulate_spread_variance(lambda2: float, lambda1: Optional[float] = None, tau0: Optional[float] = None,
                             n_paths: int = 200_000, n_steps: int = 2000, seed: int = 0,
                             chunk: int = 2000) -> Tuple[float, float]:
    """
    Monte Carlo variance of the Brownian functional behind v0 (lambda1 given)
    or vbar (tau0 given), with its standard error.

    W is built from n_steps Gaussian increments on (0, 1]; the tau0 average
    uses trapezoid weights on the grid points in [tau0, 1], starting at the
    first positive point when tau0 is zero.
    """
    if (lambda1 is None) == (tau0 is None):
        raise ConfigurationError("Pass exactly one of lambda1 or tau0.")
    if lambda1 is not None:
        i1 = _grid_index(lambda1, n_steps)
        weights = np.zeros(n_steps)
        weights[i1] = n_steps / (i1 + 1)
    else:
        weights = _average_weights(tau0, n_steps) * n_steps / np.arange(1, n_steps + 1)
    variance, se = _spread_moments(weights[:, None], np.array([_grid_index(lambda2, n_steps)]),
                                   n_paths, n_steps, seed, chunk)
    return float(variance[0, 0]), float(se[0, 0])


def simulate_spread_variance_grid(tau0s, lambda2s, n_paths: int = 200_000, n_steps: int = 2000,
                                  seed: int = 0, chunk: int = 2000) -> Tuple[np.ndarray, np.ndarray]:
    """vbar over every (tau0, lambda2) pair from one set of shared paths; rows follow tau0s."""
    grid = np.arange(1, n_steps + 1) / n_steps
    weights = np.column_stack([_average_weights(float(t), n_steps) / grid for t in tau0s])
    index = np.array([_grid_index(float(lam), n_steps) for lam in lambda2s])
    return _spread_moments(weights, index, n_paths, n_steps, seed, chunk)


# --- building blocks --------------------------------------------------------

def segment_length(P: int, fraction: float) -> int:
    """max(1, floor(P * fraction)), guarded against binary rounding."""
    return max(1, int(np.floor(P * fraction + SEGMENT_EPS)))


def z_stat(e1sq, e2sq, l1: int, l2: int) -> float:
    """sqrt(P) * (mean of first l1 of e1sq - mean of first l2 of e2sq)."""
    e1sq = np.asarray(e1sq, dtype=float)
    e2sq = np.asarray(e2sq, dtype=float)
    P = e1sq.size
    for name, value in (('l1', l1), ('l2', l2)):
        if not 1 <= value <= P:
            raise SegmentIndexError(f"{name}={value} outside 1..{P}")
    return float(np.sqrt(P) * (e1sq[:l1].mean() - e2sq[:l2].mean()))


def cw_adjusted_losses(e1, e2) -> np.ndarray:
    """e2^2 - (e1 - e2)^2."""
    e1 = np.asarray(e1, dtype=float)
    e2 = np.asarray(e2, dtype=float)
    return e2 ** 2 - (e1 - e2) ** 2


def h_correction(pair: ForecastErrorPair, lambda2: float, sigma2: float, variance: float) -> float:
    """
    Additive term turning an unadjusted statistic into its adjusted version,
    sqrt(P) * sum of the first l2 (e1 - e2)^2 over l2 * sigma * sqrt(variance).
    """
    l2 = segment_length(pair.P, lambda2)
    gap = (pair.e1[:l2] - pair.e2[:l2]) ** 2
    return float(np.sqrt(pair.P) * gap.sum() / (l2 * np.sqrt(sigma2) * np.sqrt(variance)))


def _check_sigma2(sigma2: float):
    if not sigma2 > 0.0:
        raise DegenerateVarianceError(f"sigma2 = {sigma2} is not positive")


def _result(statistic: float, variance: float, sigma2: float, pair: ForecastErrorPair,
            config: SpreadConfig, bandwidth: int = 0) -> TestResult:
    critical = std_normal_quantile(1.0 - config.alpha)
    return TestResult(
        statistic=float(statistic),
        variance_used=float(variance),
        sigma2=float(sigma2),
        p_value=float(std_normal_cdf(-statistic)),
        reject=bool(statistic > critical),
        k0=pair.k0,
        P=pair.P,
        config=config,
        bandwidth=bandwidth,
    )


# --- segment statistics -----------------------------------------------------

def _s0_value(e1sq, e2sq, P, lambda1, lambda2, sigma2, variance) -> float:
    l1 = segment_length(P, lambda1)
    l2 = segment_length(P, lambda2)
    return z_stat(e1sq, e2sq, l1, l2) / (np.sqrt(sigma2) * np.sqrt(variance))


def s0_statistic(pair: ForecastErrorPair, lambda1: float, lambda2: float, sigma2: float,
                 alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Standardized two-segment spread S0(lambda1, lambda2)."""
    _check_sigma2(sigma2)
    variance = v0(lambda1, lambda2)
    e1sq, e2sq = loss_sequences(pair)
    statistic = _s0_value(e1sq, e2sq, pair.P, lambda1, lambda2, sigma2, variance)
    config = SpreadConfig(variant=S0, lambda1=lambda1, lambda2=lambda2, alpha=alpha)
    return _result(statistic, variance, sigma2, pair, config)


def _sbar_value(e1sq, e2sq, P, tau0, lambda2, sigma2, variance) -> float:
    start = int(np.floor(P * tau0 + SEGMENT_EPS)) + 1
    n_terms = P - start + 1
    if n_terms < 2:
        raise ConfigurationError(f"S-bar needs at least two averaging terms, got {n_terms} (P={P}, tau0={tau0}).")
    l2 = segment_length(P, lambda2)
    lengths = np.arange(start, P + 1)
    running = np.cumsum(e1sq)[start - 1:] / lengths
    spread = np.sqrt(P) * (running.sum() - n_terms * e2sq[:l2].mean())
    return spread / n_terms / (np.sqrt(sigma2) * np.sqrt(variance))


def sbar_statistic(pair: ForecastErrorPair, tau0: float, lambda2: float, sigma2: float,
                   alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Spread averaged over first-segment lengths floor(P tau0)+1 .. P."""
    _check_sigma2(sigma2)
    variance = vbar(tau0, lambda2)
    e1sq, e2sq = loss_sequences(pair)
    statistic = _sbar_value(e1sq, e2sq, pair.P, tau0, lambda2, sigma2, variance)
    config = SpreadConfig(variant=SBAR, tau0=tau0, lambda2=lambda2, alpha=alpha)
    return _result(statistic, variance, sigma2, pair, config)


def s0_adj_statistic(pair: ForecastErrorPair, lambda1: float, lambda2: float, sigma2: float,
                     alpha: float = DEFAULT_ALPHA) -> TestResult:
    """S0 with the CW-adjusted large-model losses."""
    _check_sigma2(sigma2)
    variance = v0(lambda1, lambda2)
    e1sq, _ = loss_sequences(pair)
    statistic = _s0_value(e1sq, cw_adjusted_losses(pair.e1, pair.e2), pair.P, lambda1, lambda2, sigma2, variance)
    config = SpreadConfig(variant=S0_ADJ, lambda1=lambda1, lambda2=lambda2, alpha=alpha)
    return _result(statistic, variance, sigma2, pair, config)


def sbar_adj_statistic(pair: ForecastErrorPair, tau0: float, lambda2: float, sigma2: float,
                       alpha: float = DEFAULT_ALPHA) -> TestResult:
    """S-bar with the CW-adjusted large-model losses."""
    _check_sigma2(sigma2)
    variance = vbar(tau0, lambda2)
    e1sq, _ = loss_sequences(pair)
    statistic = _sbar_value(e1sq, cw_adjusted_losses(pair.e1, pair.e2), pair.P, tau0, lambda2, sigma2, variance)
    config = SpreadConfig(variant=SBAR_ADJ, tau0=tau0, lambda2=lambda2, alpha=alpha)
    return _result(statistic, variance, sigma2, pair, config)


# --- baselines --------------------------------------------------------------

def _differential_statistic(d: np.ndarray, pair: ForecastErrorPair, config: SpreadConfig) -> TestResult:
    if pair.P < 4:
        raise ConfigurationError(f"{config.variant.upper()} needs at least four forecasts, got {pair.P}.")
    mean = d.mean()
    lrv = estimate_lrv(d - mean, config.lrv_method, config.nw_bandwidth)
    statistic = np.sqrt(pair.P) * mean / np.sqrt(lrv.sigma2)
    return _result(statistic, 1.0, lrv.sigma2, pair, config, bandwidth=lrv.bandwidth)


def dm_statistic(pair: ForecastErrorPair, lrv_method: str = 'nw', bandwidth: Union[int, str] = 'auto',
                 alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Diebold-Mariano statistic on e1^2 - e2^2."""
    e1sq, e2sq = loss_sequences(pair)
    config = SpreadConfig(variant=DM, lrv_method=lrv_method, nw_bandwidth=bandwidth, alpha=alpha)
    return _differential_statistic(e1sq - e2sq, pair, config)


def cw_statistic(pair: ForecastErrorPair, lrv_method: str = 'nw', bandwidth: Union[int, str] = 'auto',
                 alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Clark-West statistic on e1^2 - (e2^2 - (e1 - e2)^2)."""
    e1sq, _ = loss_sequences(pair)
    config = SpreadConfig(variant=CW, lrv_method=lrv_method, nw_bandwidth=bandwidth, alpha=alpha)
    return _differential_statistic(e1sq - cw_adjusted_losses(pair.e1, pair.e2), pair, config)


# --- pipeline ---------------------------------------------------------------

def statistic_from_pair(pair: ForecastErrorPair, config: SpreadConfig, lrv: Optional[LrvEstimate]) -> TestResult:
    """Dispatch a configured statistic on precomputed errors and sigma^2."""
    if config.variant == DM:
        result = dm_statistic(pair, config.lrv_method, config.nw_bandwidth, config.alpha)
    elif config.variant == CW:
        result = cw_statistic(pair, config.lrv_method, config.nw_bandwidth, config.alpha)
    else:
        if lrv is None:
            raise ConfigurationError(f"{config.variant} needs a long-run variance estimate.")
        if config.variant == S0:
            result = s0_statistic(pair, config.lambda1, config.lambda2, lrv.sigma2, config.alpha)
        elif config.variant == S0_ADJ:
            result = s0_adj_statistic(pair, config.lambda1, config.lambda2, lrv.sigma2, config.alpha)
        elif config.variant == SBAR:
            result = sbar_statistic(pair, config.tau0, config.lambda2, lrv.sigma2, config.alpha)
        else:
            result = sbar_adj_statistic(pair, config.tau0, config.lambda2, lrv.sigma2, config.alpha)
        result = replace(result, bandwidth=lrv.bandwidth)
    return replace(result, config=config)


def run_test(data: TimeSeriesDataset, spec: NestedModelSpec, config: SpreadConfig) -> TestResult:
    """
    Forecast errors, sigma^2 and the configured statistic in one call.

    Args:
        data: dataset with rows (x_t, y_t)
        spec: nested model pair and pi0
        config: statistic variant and its parameters

    Returns:
        TestResult with p_value = 1 - Phi(statistic)

    Raises:
        ConfigurationError, SingularMatrixError, DegenerateVarianceError with
        the variant prefixed to the message
    """
    valid, message = validate_spread_config(config)
    if not valid:
        raise ConfigurationError(message)
    try:
        pair = generate_errors(data, spec)
        lrv = None
        if config.variant in SEGMENT_VARIANTS:
            eta = eta_series(data, spec, config.residual_source)
            lrv = estimate_lrv(eta, config.lrv_method, config.nw_bandwidth)
        result = statistic_from_pair(pair, config, lrv)
    except NestcastError as exc:
        logger.debug("run_test %s failed: %s", config.label(), exc)
        exc.args = (f"{config.label()}: {exc.args[0]}",) + exc.args[1:] if exc.args else exc.args
        raise
    logger.debug("run_test %s T=%d statistic=%.4f", config.label(), data.T, result.statistic)
    return replace(result, T=data.T, pi0=spec.pi0)
