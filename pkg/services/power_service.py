"""
Power Service Module - Local asymptotic power
Noncentralities for stationary predictors, asymptotic local power functions,
the optimal second-segment rule, relative efficiency, and the OU path
simulator for local-to-unity predictors.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import lfilter

from errors import ConfigurationError, DegenerateVarianceError
from numcore import RngStream, std_normal_cdf, std_normal_quantile
from services.nesttest_service import S0, SBAR, SpreadConfig, v0, vbar
from services.pool_service import ReplicationPool

logger = logging.getLogger(__name__)

ARE_CROSS_CHECK_TOL = 1e-10
OU_RIDGE = 1e-10
OU_MIN_EIGENVALUE = 1e-8
OU_LAMBDA_GRID = 200
OU_BLOCK_SIZE = 250
SUMMARY_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass(frozen=True)
class StationaryPowerInputs:
    """
    Local drift gamma on the extra predictors and the partitioned second
    moment matrix Q of (small-model predictors, extra predictors).
    """
    gamma: Tuple[float, ...]
    Q: np.ndarray
    sigma: float
    pi0: float
    p1: int = 0

    def __post_init__(self):
        gamma = tuple(float(g) for g in np.atleast_1d(self.gamma))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if Q.shape != (self.p1 + len(gamma),) * 2:
            raise ConfigurationError(f"Q must be {self.p1 + len(gamma)}-square, got {Q.shape}.")
        if not np.allclose(Q, Q.T):
            raise ConfigurationError("Q must be symmetric.")
        if np.linalg.eigvalsh(Q).min() <= 0.0:
            raise ConfigurationError("Q must be positive definite.")
        if not self.sigma > 0.0:
            raise ConfigurationError(f"sigma must be positive, got {self.sigma}.")
        if not 0.0 < self.pi0 < 1.0:
            raise ConfigurationError(f"pi0 must lie in (0, 1), got {self.pi0}.")
        object.__setattr__(self, 'gamma', gamma)
        object.__setattr__(self, 'Q', Q)


def schur_quadratic(gamma, Q, p1: int) -> float:
    """gamma'(Q22 - Q21 Q11^-1 Q12) gamma for the first p1 rows/columns as block 1."""
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    Q22 = Q[p1:, p1:]
    if p1 > 0:
        Q21 = Q[p1:, :p1]
        Q22 = Q22 - Q21 @ np.linalg.solve(Q[:p1, :p1], Q21.T)
    return float(gamma @ Q22 @ gamma)


def two_predictor_quadratic(gamma: float, rho12: float, ex2sq: float) -> float:
    """gamma^2 (1 - rho12^2) E[x2^2] for one included and one omitted predictor."""
    return float(gamma ** 2 * (1.0 - rho12 ** 2) * ex2sq)


def _scale(pi0: float, sigma: float, variance: float) -> float:
    return np.sqrt(1.0 - pi0) / (sigma * np.sqrt(variance))


def noncentrality_psi0(inputs: StationaryPowerInputs, lambda1: float, lambda2: float) -> float:
    """Drift of S0 under stationary local alternatives."""
    quad = schur_quadratic(inputs.gamma, inputs.Q, inputs.p1)
    return float(_scale(inputs.pi0, inputs.sigma, v0(lambda1, lambda2)) * quad)


def noncentrality_psibar(inputs: StationaryPowerInputs, tau0: float, lambda2: float) -> float:
    """Drift of S-bar under stationary local alternatives."""
    quad = schur_quadratic(inputs.gamma, inputs.Q, inputs.p1)
    return float(_scale(inputs.pi0, inputs.sigma, vbar(tau0, lambda2)) * quad)


def alpf(psi: float, alpha: float, adjusted: bool = False) -> float:
    """
    Asymptotic local power 1 - Phi(q_alpha - k psi), k = 2 for the adjusted
    statistics and 1 otherwise.
    """
    if psi < 0.0:
        raise ConfigurationError(f"psi must be nonnegative, got {psi}.")
    q_alpha = std_normal_quantile(1.0 - alpha)
    k = 2.0 if adjusted else 1.0
    return float(std_normal_cdf(k * psi - q_alpha))


def noncentrality(inputs: StationaryPowerInputs, config: SpreadConfig) -> float:
    if config.family == S0:
        return noncentrality_psi0(inputs, config.lambda1, config.lambda2)
    if config.family == SBAR:
        return noncentrality_psibar(inputs, config.tau0, config.lambda2)
    raise ConfigurationError(f"No local power formula for variant {config.variant!r}.")


def alpf_curve(gammas: Sequence[float], inputs: StationaryPowerInputs, config: SpreadConfig) -> List[Dict]:
    """
    Local power along a grid of scalar drifts applied to every extra predictor.

    Returns:
        list of dicts with keys gamma, psi, power
    """
    rows = []
    base = np.asarray(inputs.gamma, dtype=float)
    direction = base / np.abs(base).max() if np.any(base) else np.ones_like(base)
    for g in gammas:
        scaled = StationaryPowerInputs(tuple(direction * g), inputs.Q, inputs.sigma, inputs.pi0, inputs.p1)
        psi = noncentrality(scaled, config)
        rows.append({'gamma': float(g), 'psi': psi, 'power': alpf(psi, config.alpha, config.adjusted)})
    return rows


def optimal_lambda2(tau0: float) -> float:
    """Second-segment fraction minimizing vbar(tau0, .)."""
    if not 0.0 <= tau0 < 1.0:
        raise ConfigurationError(f"tau0 must lie in [0, 1), got {tau0}.")
    return 0.5 * tau0 + 0.5


def _are_explicit(lambda1: float, lambda2: float, tau0: float) -> float:
    tau = tau0
    tau_log_tau = tau * np.log(tau) if tau > 0.0 else 0.0
    numer = 2.0 * (1.0 - tau) * (1.0 + np.log((1.0 + tau) / 2.0)) + 2.0 * tau_log_tau
    return lambda1 * lambda2 / abs(lambda1 - lambda2) * numer / (1.0 - tau) ** 2


def are(lambda1: float, lambda2: float, tau0: float) -> float:
    """
    Relative efficiency of S-bar at its optimal lambda2 against S0(lambda1, lambda2).

    Raises:
        DegenerateVarianceError: the variance route and the explicit
            expression disagree beyond 1e-10
    """
    value = vbar(tau0, optimal_lambda2(tau0)) / v0(lambda1, lambda2)
    check = _are_explicit(lambda1, lambda2, tau0)
    if abs(value - check) > ARE_CROSS_CHECK_TOL * max(1.0, abs(value)):
        raise DegenerateVarianceError(f"ARE cross-check failed: {value!r} vs {check!r}")
    return float(value)


def are_threshold(tau0: float) -> float:
    """lambda2 above which S0(1, lambda2) beats the optimal S-bar at tau0."""
    if not 0.0 < tau0 < 1.0:
        raise ConfigurationError(f"tau0 must lie in (0, 1), got {tau0}.")
    tau = tau0
    bracket = np.log(0.5 * (1.0 + tau)) - tau * np.log((1.0 + tau) / (2.0 * tau))
    return float((1.0 - tau) ** 2 / ((1.0 - tau) * (3.0 - tau) + 2.0 * bracket))


def beta_gamma_map(beta: float, T: int, persistent: bool = False) -> float:
    """gamma = beta T^(1/4) for stationary predictors, beta T^(3/4) for persistent ones."""
    if T < 1:
        raise ConfigurationError(f"T must be positive, got {T}.")
    return float(beta * T ** (0.75 if persistent else 0.25))


def gamma_to_beta(gamma: float, T: int, persistent: bool = False) -> float:
    if T < 1:
        raise ConfigurationError(f"T must be positive, got {T}.")
    return float(gamma / T ** (0.75 if persistent else 0.25))


# --- persistent predictors --------------------------------------------------

@dataclass(frozen=True)
class OuSpec:
    """
    Local-to-unity parameters of the predictors (small-model ones first) and
    simulation sizes. Paths follow Euler-Maruyama steps unless scheme is
    'exact', the Gaussian AR(1) transition on the grid.
    """
    c: Tuple[float, ...]
    n_steps: int = 2000
    n_paths: int = 2000
    seed: int = 0
    scheme: str = 'euler'

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.c))
        if any(v <= 0.0 for v in c):
            raise ConfigurationError("Local-to-unity parameters must be positive.")
        if self.n_steps < 100:
            raise ConfigurationError(f"n_steps must be at least 100, got {self.n_steps}.")
        if self.n_paths < 1000:
            raise ConfigurationError(f"n_paths must be at least 1000, got {self.n_paths}.")
        if self.scheme not in ('exact', 'euler'):
            raise ConfigurationError(f"Unknown OU scheme {self.scheme!r}.")
        if self.scheme == 'euler' and max(c, default=0.0) >= self.n_steps:
            raise ConfigurationError(f"Euler steps need c < n_steps, got c={max(c)} with {self.n_steps} steps.")
        object.__setattr__(self, 'c', c)


@dataclass
class OuSummary:
    mean: float
    sd: float
    se: float
    quantiles: Dict[float, float]
    n_used: int
    n_discarded: int
    values: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class _OuBlock:
    spec: OuSpec
    index: int
    size: int
    gamma: Tuple[float, ...]
    p1: int
    pi0: float
    config: SpreadConfig
    scale: float


def simulate_ou_paths(c: Sequence[float], n_steps: int, size: int, stream: RngStream,
                      scheme: str = 'euler') -> np.ndarray:
    """
    OU paths dJ = -c J ds + dW on [0, 1] started at zero.

    Returns:
        array (size, n_steps + 1, len(c))
    """
    dt = 1.0 / n_steps
    rng = stream.generator()
    shocks = rng.standard_normal((size, n_steps, len(c)))
    paths = np.zeros((size, n_steps + 1, len(c)))
    for i, ci in enumerate(c):
        if scheme == 'exact':
            a = np.exp(-ci * dt)
            s = np.sqrt(-np.expm1(-2.0 * ci * dt) / (2.0 * ci))
        else:
            a = 1.0 - ci * dt
            s = np.sqrt(dt)
        paths[:, 1:, i] = lfilter([s], [1.0, -a], shocks[:, :, i], axis=1)
    return paths


def _ou_block(block: _OuBlock) -> Tuple[np.ndarray, int]:
    spec, p1 = block.spec, block.p1
    n = spec.n_steps
    dt = 1.0 / n
    stream = RngStream(spec.seed, block.index)
    J = simulate_ou_paths(spec.c, n, block.size, stream, spec.scheme)
    J1, J2 = J[:, :, :p1], J[:, :, p1:]
    k0 = int(round(block.pi0 * n))
    gamma = np.asarray(block.gamma)

    keep = np.ones(block.size, dtype=bool)
    if p1 > 0:
        # left-Riemann moment integrals up to each grid point
        A11 = np.cumsum(J1[:, :-1, :, None] * J1[:, :-1, None, :], axis=1) * dt
        A12 = np.cumsum(J1[:, :-1, :, None] * J2[:, :-1, None, :], axis=1) * dt
        A11 = np.concatenate([np.zeros_like(A11[:, :1]), A11], axis=1)[:, k0:]
        A12 = np.concatenate([np.zeros_like(A12[:, :1]), A12], axis=1)[:, k0:]
        keep = np.linalg.eigvalsh(A11[:, 0]).min(axis=1) >= OU_MIN_EIGENVALUE
        ridge = OU_RIDGE * np.eye(p1)
        M = np.linalg.solve(A11 + ridge, A12)
        Jstar = J2[:, k0:] - np.einsum('bkij,bki->bkj', M, J1[:, k0:])
    else:
        Jstar = J2[:, k0:]

    q = (Jstar @ gamma) ** 2
    # cumulative integral from pi0 to each grid point s_k, k >= k0
    cum = np.concatenate([np.zeros((block.size, 1)), np.cumsum(q[:, :-1], axis=1) * dt], axis=1)
    s_grid = np.arange(k0, n + 1) / n
    width = 1.0 - block.pi0

    def inner(lam: float) -> np.ndarray:
        target = block.pi0 + width * lam
        return np.array([np.interp(target, s_grid, row) for row in cum]) / (width * lam)

    config = block.config
    if config.family == S0:
        xi = inner(config.lambda1)
    else:
        midpoints = config.tau0 + (np.arange(OU_LAMBDA_GRID) + 0.5) * (1.0 - config.tau0) / OU_LAMBDA_GRID
        targets = block.pi0 + width * midpoints
        interpolated = np.stack([np.interp(targets, s_grid, row) for row in cum])
        xi = (interpolated / (width * midpoints)).mean(axis=1)
    if config.adjusted:
        xi = xi + inner(config.lambda2)
    values = block.scale * xi
    return values[keep], int((~keep).sum())


def simulate_ou_noncentrality(spec: OuSpec, gamma, sigma: float, pi0: float, config: SpreadConfig,
                              p1: int = 0, pool: Optional[ReplicationPool] = None) -> OuSummary:
    """
    Monte Carlo distribution of the persistent-predictor drift of a segment
    statistic.

    Args:
        spec: OU parameters (first p1 belong to the small model) and sizes
        gamma: drift on the extra predictors
        sigma: square root of the long-run variance of the squared errors
        pi0: forecast origin fraction
        config: statistic family and its fractions; adjusted variants add
            the second-segment term
        p1: number of small-model predictors
        pool: replication pool; paths are split into fixed blocks whose
            streams depend only on the block index

    Returns:
        OuSummary of the simulated drifts
    """
    gamma = tuple(float(g) for g in np.atleast_1d(gamma))
    if p1 + len(gamma) != len(spec.c):
        raise ConfigurationError(f"{len(spec.c)} OU parameters for {p1} + {len(gamma)} predictors.")
    if not 0.0 < pi0 < 1.0:
        raise ConfigurationError(f"pi0 must lie in (0, 1), got {pi0}.")
    if not sigma > 0.0:
        raise ConfigurationError(f"sigma must be positive, got {sigma}.")
    if config.family == S0:
        variance = v0(config.lambda1, config.lambda2)
    elif config.family == SBAR:
        variance = vbar(config.tau0, config.lambda2)
    else:
        raise ConfigurationError(f"No persistent-predictor drift for variant {config.variant!r}.")

    scale = float(_scale(pi0, sigma, variance))
    blocks = []
    for index, start in enumerate(range(0, spec.n_paths, OU_BLOCK_SIZE)):
        size = min(OU_BLOCK_SIZE, spec.n_paths - start)
        blocks.append(_OuBlock(spec, index, size, gamma, p1, pi0, config, scale))

    pool = pool or ReplicationPool(1)
    results = pool.map(_ou_block, blocks, label=f"ou {config.label()}")
    values = np.concatenate([r[0] for r in results])
    discarded = sum(r[1] for r in results)
    if discarded:
        logger.info("discarded %d of %d OU paths with near-singular moments", discarded, spec.n_paths)
    if values.size == 0:
        raise DegenerateVarianceError("every OU path was discarded")

    sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return OuSummary(
        mean=float(values.mean()),
        sd=sd,
        se=sd / np.sqrt(values.size),
        quantiles={q: float(np.quantile(values, q)) for q in SUMMARY_QUANTILES},
        n_used=int(values.size),
        n_discarded=int(discarded),
        values=values,
    )
