"""
Simulation Service Module - Monte Carlo size and power experiments
Data generating processes for the single-predictor design (DGP1) and the
inflation-style VAR design (DGP2), the experiment grid, and replicated
rejection-frequency estimation.
"""

import itertools
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import lfilter

from errors import ConfigurationError, NestcastError
from numcore import RngStream
from services.forecast_service import NestedModelSpec, TimeSeriesDataset, generate_errors
from services.lrv_service import estimate_lrv, eta_series, normalize_method
from services.nesttest_service import (
    DEFAULT_ALPHA, S0, SBAR, SEGMENT_VARIANTS, SpreadConfig, statistic_from_pair, validate_spread_config
)
from services.pool_service import ReplicationPool

logger = logging.getLogger(__name__)

# Simulation design constants
BURN_IN = 200
DEFAULT_PI0 = 0.25
DEFAULT_REPS = 2000
MIN_REPS = 100
BLOCK_SIZE = 50
EXCLUSION_FLAG_RATE = 0.005

DGP1 = 'dgp1'
DGP2 = 'dgp2'
GAUSSIAN = 'gaussian'
ARCH = 'arch'

DGP1_ARCH = (1.8, 0.4)
DGP2_ARCH = (0.6, 0.4)
DGP2_PHI = ((0.6, 0.1, 0.0), (0.6, 0.25, 0.0), (0.0, 0.0, 0.9))
DGP2_POWER_BETA = (0.15, 0.15, -0.15)

REJECT = 1
ACCEPT = 0
EXCLUDED = -1


@dataclass(frozen=True)
class DgpSpec:
    kind: str = DGP1
    T: int = 500
    beta: float = 0.0
    beta_vec: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    phi1: float = 0.95
    error_mode: str = GAUSSIAN
    arch: Optional[Tuple[float, float]] = None
    sigma_u2: float = 3.0
    sigma_v2: float = 0.01
    rho_uv: float = -0.8
    mu: float = 1.0
    rho: float = 0.25
    Phi: Tuple[Tuple[float, ...], ...] = DGP2_PHI
    seed: int = 0
    pi0: float = DEFAULT_PI0
    burn_in: int = BURN_IN

    @property
    def arch_params(self) -> Tuple[float, float]:
        if self.arch is not None:
            return tuple(self.arch)
        return DGP1_ARCH if self.kind == DGP1 else DGP2_ARCH


def validate_dgp_spec(spec: DgpSpec) -> Tuple[bool, str]:
    """
    Check a data generating process specification.

    Returns:
        tuple: (valid: bool, message: str)
    """
    if spec.kind not in (DGP1, DGP2):
        return False, f"Unknown DGP {spec.kind!r}."
    if spec.error_mode not in (GAUSSIAN, ARCH):
        return False, f"Unknown error mode {spec.error_mode!r}."
    alpha0, alpha1 = spec.arch_params
    if alpha0 <= 0.0 or not 0.0 <= alpha1 < 1.0:
        return False, f"ARCH parameters need alpha0 > 0 and alpha1 in [0, 1), got ({alpha0}, {alpha1})."
    if spec.T < 2:
        return False, f"T must be at least 2, got {spec.T}."
    if spec.burn_in < 0:
        return False, "burn_in must be nonnegative."
    if spec.kind == DGP1:
        if spec.sigma_u2 <= 0.0 or spec.sigma_v2 < 0.0:
            return False, "DGP1 variances must be positive (sigma_v2 may be zero)."
        if not -1.0 <= spec.rho_uv <= 1.0:
            return False, f"rho_uv must lie in [-1, 1], got {spec.rho_uv}."
    return True, "ok"


def _check(spec: DgpSpec, kind: str):
    if spec.kind != kind:
        raise ConfigurationError(f"Expected a {kind} specification, got {spec.kind}.")
    valid, message = validate_dgp_spec(spec)
    if not valid:
        raise ConfigurationError(message)


def _stream(spec: DgpSpec, stream) -> RngStream:
    return stream if isinstance(stream, RngStream) else RngStream(spec.seed, int(stream))


def arch_errors(eps: np.ndarray, alpha0: float, alpha1: float) -> np.ndarray:
    """u_t = eps_t sqrt(h_t), h_t = alpha0 + alpha1 u_{t-1}^2, h at its unconditional mean."""
    u = np.empty(eps.shape[0])
    h = alpha0 / (1.0 - alpha1)
    for t, e in enumerate(eps.tolist()):
        value = e * math.sqrt(h)
        u[t] = value
        h = alpha0 + alpha1 * value * value
    return u


def gen_dgp1(spec: DgpSpec, stream) -> TimeSeriesDataset:
    """
    x_t = phi1 x_{t-1} + v_t, y_{t+1} = beta x_t + u_{t+1}.

    Args:
        spec: DGP1 specification
        stream: replication index (or an RngStream)

    Returns:
        TimeSeriesDataset with the single predictor column 'x'
    """
    _check(spec, DGP1)
    rng = _stream(spec, stream).generator()
    n = spec.burn_in + spec.T
    z = rng.standard_normal((n, 2))
    eps = z[:, 0]
    v = math.sqrt(spec.sigma_v2) * (spec.rho_uv * eps + math.sqrt(1.0 - spec.rho_uv ** 2) * z[:, 1])
    if spec.error_mode == GAUSSIAN:
        u = math.sqrt(spec.sigma_u2) * eps
    else:
        u = arch_errors(eps, *spec.arch_params)

    x = lfilter([1.0], [1.0, -spec.phi1], v)
    y = u.copy()
    y[1:] += spec.beta * x[:-1]
    keep = slice(spec.burn_in, n)
    return TimeSeriesDataset(y=y[keep], X=x[keep, None], columns=('x',))


def gen_dgp2(spec: DgpSpec, stream) -> TimeSeriesDataset:
    """
    x_t = Phi x_{t-1} + v_t, y_{t+1} = mu + rho y_t + beta'x_t + u_{t+1}.

    Returns:
        TimeSeriesDataset with columns ('y_own', 'x1', 'x2', 'x3'); y_own is
        y_t itself, the own lag of the forecast target
    """
    _check(spec, DGP2)
    rng = _stream(spec, stream).generator()
    n = spec.burn_in + spec.T
    z = rng.standard_normal((n, 4))
    v = z[:, :3]
    if spec.error_mode == GAUSSIAN:
        u = z[:, 3]
    else:
        u = arch_errors(z[:, 3], *spec.arch_params)

    Phi = np.asarray(spec.Phi, dtype=float)
    beta = np.asarray(spec.beta_vec, dtype=float)
    x = np.zeros((n, 3))
    y = np.empty(n)
    y[0] = spec.mu / (1.0 - spec.rho)
    for t in range(1, n):
        x[t] = Phi @ x[t - 1] + v[t]
        y[t] = spec.mu + spec.rho * y[t - 1] + beta @ x[t - 1] + u[t]
    keep = slice(spec.burn_in, n)
    X = np.column_stack([y[keep], x[keep]])
    return TimeSeriesDataset(y=y[keep], X=X, columns=('y_own', 'x1', 'x2', 'x3'))


def generate_dataset(spec: DgpSpec, stream) -> TimeSeriesDataset:
    if spec.kind == DGP1:
        return gen_dgp1(spec, stream)
    return gen_dgp2(spec, stream)


def model_spec_for(kind: str, pi0: float, fit_intercept: bool = False) -> NestedModelSpec:
    """Nested pair used in the simulations for each DGP."""
    if kind == DGP1:
        return NestedModelSpec(idx1=(), idx2_extra=(0,), include_intercept=fit_intercept, pi0=pi0)
    return NestedModelSpec(idx1=(0,), idx2_extra=(1, 2, 3), include_intercept=True, pi0=pi0)


# --- experiment grid ----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentGrid:
    """
    Declarative experiment: design points are the product of T, phi1, beta and
    error mode; every statistic in `variants` is evaluated under every
    long-run variance method in `lrv`. For DGP2, beta scales beta_vec.
    """
    name: str = 'experiment'
    dgp: str = DGP1
    T: Tuple[int, ...] = (250,)
    phi1: Tuple[float, ...] = (0.95,)
    beta: Tuple[float, ...] = (0.0,)
    error_mode: Tuple[str, ...] = (GAUSSIAN,)
    lrv: Tuple[str, ...] = ('hom',)
    variants: Tuple[SpreadConfig, ...] = (SpreadConfig(variant='s0_adj', lambda1=1.0, lambda2=0.9),)
    n_reps: int = DEFAULT_REPS
    seed: int = 0
    workers: int = 1
    pi0: float = DEFAULT_PI0
    alpha: float = DEFAULT_ALPHA
    nw_bandwidth: object = 'auto'
    fit_intercept: bool = False
    beta_vec: Tuple[float, float, float] = DGP2_POWER_BETA
    layout: Optional[str] = None

    @classmethod
    def from_mapping(cls, raw: Dict) -> 'ExperimentGrid':
        """Build a grid from a parsed config tree, validating keys and values."""
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigurationError(f"Unknown grid key(s): {', '.join(sorted(unknown))}.")
        values = dict(raw)
        for key in ('T', 'phi1', 'beta', 'error_mode', 'lrv'):
            if key in values:
                item = values[key]
                values[key] = tuple(item) if isinstance(item, (list, tuple)) else (item,)
        if 'beta_vec' in values:
            values['beta_vec'] = tuple(float(b) for b in values['beta_vec'])
        if 'variants' in values:
            variants = []
            for entry in values['variants']:
                if isinstance(entry, str):
                    entry = {'variant': entry}
                if not isinstance(entry, dict):
                    raise ConfigurationError(f"Variant entries must be mappings, got {entry!r}.")
                allowed = {'variant', 'lambda1', 'lambda2', 'tau0'}
                extra = set(entry) - allowed
                if extra:
                    raise ConfigurationError(f"Unknown variant key(s): {', '.join(sorted(extra))}.")
                variants.append(SpreadConfig(**entry))
            values['variants'] = tuple(variants)
        try:
            grid = cls(**values)
        except TypeError as exc:
            raise ConfigurationError(f"Invalid grid: {exc}") from None
        valid, message = validate_grid(grid)
        if not valid:
            raise ConfigurationError(message)
        return grid

    def statistic_configs(self) -> List[SpreadConfig]:
        configs = []
        for lrv in self.lrv:
            for variant in self.variants:
                config = replace(variant, lrv_method=normalize_method(lrv), alpha=self.alpha,
                                 nw_bandwidth=self.nw_bandwidth)
                if config not in configs:
                    configs.append(config)
        return configs

    def design_points(self) -> List['DesignPoint']:
        phis = self.phi1 if self.dgp == DGP1 else (None,)
        return [DesignPoint(int(T), phi, float(beta), mode)
                for T, phi, beta, mode in itertools.product(self.T, phis, self.beta, self.error_mode)]


@dataclass(frozen=True)
class DesignPoint:
    T: int
    phi1: Optional[float]
    beta: float
    error_mode: str

    def dgp_spec(self, grid: ExperimentGrid) -> DgpSpec:
        if grid.dgp == DGP1:
            return DgpSpec(kind=DGP1, T=self.T, beta=self.beta, phi1=self.phi1, error_mode=self.error_mode,
                           seed=grid.seed, pi0=grid.pi0)
        beta_vec = tuple(self.beta * b for b in grid.beta_vec)
        return DgpSpec(kind=DGP2, T=self.T, beta_vec=beta_vec, error_mode=self.error_mode,
                       seed=grid.seed, pi0=grid.pi0)


def validate_grid(grid: ExperimentGrid) -> Tuple[bool, str]:
    """
    Check an experiment grid before any simulation runs.

    Returns:
        tuple: (valid: bool, message: str)
    """
    if grid.dgp not in (DGP1, DGP2):
        return False, f"Unknown DGP {grid.dgp!r}."
    if not grid.T or any(int(T) < 20 for T in grid.T):
        return False, "Every T must be at least 20."
    if not grid.variants:
        return False, "At least one statistic variant is required."
    if grid.n_reps < MIN_REPS:
        return False, f"n_reps must be at least {MIN_REPS}, got {grid.n_reps}."
    if int(grid.workers) < 1:
        return False, "workers must be positive."
    if not 0.0 < grid.pi0 < 1.0:
        return False, f"pi0 must lie in (0, 1), got {grid.pi0}."
    for mode in grid.error_mode:
        if mode not in (GAUSSIAN, ARCH):
            return False, f"Unknown error mode {mode!r}."
    for lrv in grid.lrv:
        try:
            normalize_method(lrv)
        except ConfigurationError as exc:
            return False, str(exc)
    for config in grid.statistic_configs():
        valid, message = validate_spread_config(config)
        if not valid:
            return False, f"{config.label()}: {message}"
    return True, "ok"


# --- reports --------------------------------------------------------------------

@dataclass(frozen=True)
class CellResult:
    variant: str
    lambda1: Optional[float]
    lambda2: Optional[float]
    tau0: Optional[float]
    T: int
    phi1: Optional[float]
    beta: float
    error_mode: str
    lrv: str
    frequency: Optional[float]
    n_valid: int
    n_excluded: int
    exclusion_rate: float
    flagged: bool
    mc_se: Optional[float]

    def matches(self, **criteria) -> bool:
        for key, wanted in criteria.items():
            value = getattr(self, key)
            if isinstance(wanted, float) and isinstance(value, (int, float)):
                if not math.isclose(value, wanted, rel_tol=0.0, abs_tol=1e-9):
                    return False
            elif value != wanted:
                return False
        return True


@dataclass
class ExperimentReport:
    name: str
    dgp: str
    n_reps: int
    master_seed: int
    pi0: float
    alpha: float
    elapsed: float
    cells: List[CellResult] = field(default_factory=list)

    def find(self, **criteria) -> Optional[CellResult]:
        for cell in self.cells:
            if cell.matches(**criteria):
                return cell
        return None

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['cells'] = [asdict(cell) for cell in self.cells]
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> 'ExperimentReport':
        try:
            cells = [CellResult(**cell) for cell in data.get('cells', [])]
            values = {key: data[key] for key in ('name', 'dgp', 'n_reps', 'master_seed', 'pi0', 'alpha', 'elapsed')}
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"Malformed experiment report: {exc}") from None
        return cls(cells=cells, **values)


def _cell_fields(config: SpreadConfig) -> Dict:
    return {
        'variant': config.variant,
        'lambda1': config.lambda1 if config.family == S0 else None,
        'lambda2': config.lambda2 if config.family in (S0, SBAR) else None,
        'tau0': config.tau0 if config.family == SBAR else None,
        'lrv': 'nw' if normalize_method(config.lrv_method) == 'newey_west' else 'hom',
    }


def reduce_bits(bits: np.ndarray) -> Tuple[Optional[float], int, int]:
    """(frequency, n_valid, n_excluded) from a row of replication outcomes."""
    valid = bits >= 0
    n_valid = int(valid.sum())
    n_excluded = int(bits.size - n_valid)
    if n_valid == 0:
        return None, 0, n_excluded
    return float((bits == REJECT).sum() / n_valid), n_valid, n_excluded


# --- replication ------------------------------------------------------------------

@dataclass(frozen=True)
class _ReplicationBlock:
    dgp_spec: DgpSpec
    model_spec: NestedModelSpec
    configs: Tuple[SpreadConfig, ...]
    start: int
    stop: int


def replicate_once(dgp_spec: DgpSpec, model_spec: NestedModelSpec, configs: Sequence[SpreadConfig],
                   replication: int) -> np.ndarray:
    """
    Reject/accept/excluded outcome of every configured statistic for one
    replication drawn on stream `replication`.
    """
    bits = np.full(len(configs), EXCLUDED, dtype=np.int8)
    data = generate_dataset(dgp_spec, replication)
    try:
        pair = generate_errors(data, model_spec)
    except NestcastError as exc:
        logger.debug("replication %d excluded: %s", replication, exc)
        return bits

    eta = None
    lrv_cache = {}
    for j, config in enumerate(configs):
        try:
            lrv = None
            if config.variant in SEGMENT_VARIANTS:
                if eta is None:
                    eta = eta_series(data, model_spec, config.residual_source)
                key = (normalize_method(config.lrv_method), config.nw_bandwidth)
                if key not in lrv_cache:
                    lrv_cache[key] = estimate_lrv(eta, config.lrv_method, config.nw_bandwidth)
                lrv = lrv_cache[key]
            result = statistic_from_pair(pair, config, lrv)
            bits[j] = REJECT if result.reject else ACCEPT
        except NestcastError as exc:
            logger.debug("replication %d %s excluded: %s", replication, config.label(), exc)
    return bits


def _run_block(block: _ReplicationBlock) -> np.ndarray:
    columns = [replicate_once(block.dgp_spec, block.model_spec, block.configs, r)
               for r in range(block.start, block.stop)]
    return np.stack(columns, axis=1)


def run_experiment(grid: ExperimentGrid, n_reps: Optional[int] = None, master_seed: Optional[int] = None,
                   workers: Optional[int] = None, pool: Optional[ReplicationPool] = None,
                   progress: Optional[Callable[[str], None]] = None) -> ExperimentReport:
    """
    Replicated rejection frequencies for every design point and statistic.

    Replication r of every design point draws from stream r under the master
    seed, and blocks of replications are fixed independently of the worker
    count, so the report is identical for any number of workers.

    Args:
        grid: experiment description
        n_reps, master_seed, workers: overrides of the grid values
        pool: replication pool (defaults to a ReplicationPool with `workers`)
        progress: optional callback receiving one line per finished design point

    Returns:
        ExperimentReport
    """
    overrides = {}
    if n_reps is not None:
        overrides['n_reps'] = int(n_reps)
    if master_seed is not None:
        overrides['seed'] = int(master_seed)
    if workers is not None:
        overrides['workers'] = int(workers)
    grid = replace(grid, **overrides)
    valid, message = validate_grid(grid)
    if not valid:
        raise ConfigurationError(message)

    pool = pool or ReplicationPool(grid.workers)
    configs = tuple(grid.statistic_configs())
    model_spec = model_spec_for(grid.dgp, grid.pi0, grid.fit_intercept)
    points = grid.design_points()
    logger.info("experiment %s: %d design points x %d statistics x %d reps",
                grid.name, len(points), len(configs), grid.n_reps)

    started = time.perf_counter()
    cells = []
    for index, point in enumerate(points, start=1):
        dgp_spec = point.dgp_spec(grid)
        blocks = [_ReplicationBlock(dgp_spec, model_spec, configs, start, min(start + BLOCK_SIZE, grid.n_reps))
                  for start in range(0, grid.n_reps, BLOCK_SIZE)]
        bits = np.concatenate(pool.map(_run_block, blocks), axis=1)

        for config, row in zip(configs, bits):
            frequency, n_valid, n_excluded = reduce_bits(row)
            rate = n_excluded / grid.n_reps
            cell = CellResult(
                T=point.T, phi1=point.phi1, beta=point.beta, error_mode=point.error_mode,
                frequency=frequency, n_valid=n_valid, n_excluded=n_excluded, exclusion_rate=rate,
                flagged=rate >= EXCLUSION_FLAG_RATE,
                mc_se=None if frequency is None else math.sqrt(frequency * (1.0 - frequency) / n_valid),
                **_cell_fields(config),
            )
            if cell.flagged:
                logger.warning("cell %s T=%d flagged: exclusion rate %.3f", config.label(), point.T, rate)
            cells.append(cell)

        line = (f"[{index}/{len(points)}] T={point.T} phi1={point.phi1} beta={point.beta:g} "
                f"errors={point.error_mode} done")
        logger.info(line)
        if progress is not None:
            progress(line)

    elapsed = time.perf_counter() - started
    return ExperimentReport(name=grid.name, dgp=grid.dgp, n_reps=grid.n_reps, master_seed=grid.seed,
                            pi0=grid.pi0, alpha=grid.alpha, elapsed=elapsed, cells=cells)
