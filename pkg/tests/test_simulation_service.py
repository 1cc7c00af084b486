# Unit Tests: data generating processes and the Monte Carlo harness

import math
from unittest.mock import Mock

import numpy as np
import pytest

from errors import ConfigurationError, SingularMatrixError
from services import simulation_service
from services.forecast_service import generate_errors
from services.nesttest_service import SpreadConfig
from services.pool_service import ReplicationPool
from services.simulation_service import (
    ACCEPT, ARCH, DGP1, DGP2, EXCLUDED, REJECT, CellResult, DgpSpec, ExperimentGrid, ExperimentReport, arch_errors,
    gen_dgp1, gen_dgp2, generate_dataset, model_spec_for, reduce_bits, replicate_once, run_experiment,
    validate_dgp_spec, validate_grid
)


def _inline_map(fn, blocks, label=None):
    return [fn(block) for block in blocks]


def _reversed_map(fn, blocks, label=None):
    """Evaluates blocks back to front but returns them in order."""
    blocks = list(blocks)
    results = {i: fn(blocks[i]) for i in reversed(range(len(blocks)))}
    return [results[i] for i in range(len(blocks))]


def _small_grid(**overrides):
    values = dict(name='smoke', dgp=DGP1, T=(100,), phi1=(0.95,), lrv=('hom',),
                  variants=(SpreadConfig(variant='s0_adj', lambda1=1.0, lambda2=0.9), SpreadConfig(variant='dm')),
                  n_reps=100, seed=5)
    values.update(overrides)
    return ExperimentGrid(**values)


# ARCH errors

def test_arch_without_feedback_scales_shocks():
    """alpha1 = 0 leaves eps multiplied by sqrt(alpha0)."""
    eps = np.random.default_rng(0).standard_normal(50)
    assert np.allclose(arch_errors(eps, 2.0, 0.0), math.sqrt(2.0) * eps, atol=1e-15)


def test_arch_recursion_by_hand():
    """h starts at alpha0 / (1 - alpha1), then alpha0 + alpha1 u^2."""
    u = arch_errors(np.array([1.0, 1.0]), 1.0, 0.5)
    assert u[0] == pytest.approx(math.sqrt(2.0))
    assert u[1] == pytest.approx(math.sqrt(1.0 + 0.5 * 2.0))


# DGP1

def test_dgp1_is_deterministic_per_stream():
    spec = DgpSpec(kind=DGP1, T=150, seed=9)
    first, again, other = gen_dgp1(spec, 3), gen_dgp1(spec, 3), gen_dgp1(spec, 4)
    assert np.array_equal(first.y, again.y)
    assert np.array_equal(first.X, again.X)
    assert not np.array_equal(first.y, other.y)
    assert first.columns == ('x',)
    assert first.T == 150


def test_dgp1_beta_adds_lagged_predictor():
    """Same stream, beta = 1 against beta = 0: the difference is x_{t-1}."""
    null = gen_dgp1(DgpSpec(kind=DGP1, T=120, beta=0.0, seed=1), 0)
    alt = gen_dgp1(DgpSpec(kind=DGP1, T=120, beta=1.0, seed=1), 0)
    assert np.array_equal(null.X, alt.X)
    assert np.allclose((alt.y - null.y)[1:], null.X[:-1, 0], atol=1e-12)


def test_dgp1_error_correlation():
    """u and v are correlated at rho_uv = -0.8."""
    spec = DgpSpec(kind=DGP1, T=40_000, phi1=0.95, seed=2)
    data = gen_dgp1(spec, 0)
    x = data.X[:, 0]
    v = x[1:] - 0.95 * x[:-1]
    u = data.y[1:]
    assert np.corrcoef(u, v)[0, 1] == pytest.approx(-0.8, abs=0.02)
    assert np.var(u) == pytest.approx(3.0, rel=0.05)


def test_dgp1_predictor_stationary_variance():
    """Var x = sigma_v^2 / (1 - phi1^2) = 0.01 / 0.0975."""
    data = gen_dgp1(DgpSpec(kind=DGP1, T=400_000, phi1=0.95, seed=8), 0)
    assert np.var(data.X[:, 0]) == pytest.approx(0.01 / (1.0 - 0.95 ** 2), rel=0.05)


def test_dgp1_arch_unconditional_variance():
    """alpha0 / (1 - alpha1) = 1.8 / 0.6 = 3."""
    data = gen_dgp1(DgpSpec(kind=DGP1, T=100_000, error_mode=ARCH, seed=3), 0)
    assert np.var(data.y) == pytest.approx(3.0, rel=0.05)


# DGP2

def test_dgp2_own_lag_column_is_target():
    data = gen_dgp2(DgpSpec(kind=DGP2, T=80, seed=4), 0)
    assert data.columns == ('y_own', 'x1', 'x2', 'x3')
    assert np.array_equal(data.X[:, 0], data.y)


def test_dgp2_predictors_do_not_depend_on_beta():
    null = gen_dgp2(DgpSpec(kind=DGP2, T=80, seed=4), 2)
    alt = gen_dgp2(DgpSpec(kind=DGP2, T=80, beta_vec=(0.15, 0.15, -0.15), seed=4), 2)
    assert np.array_equal(null.X[:, 1:], alt.X[:, 1:])
    assert not np.array_equal(null.y, alt.y)


def test_dgp2_null_moments():
    """Mean mu / (1 - rho) = 4/3 and variance 1 / (1 - rho^2) = 16/15."""
    data = gen_dgp2(DgpSpec(kind=DGP2, T=50_000, seed=5), 0)
    assert np.mean(data.y) == pytest.approx(4.0 / 3.0, abs=0.03)
    assert np.var(data.y) == pytest.approx(16.0 / 15.0, rel=0.03)


def test_dgp2_x3_unrelated_to_x1_given_x2():
    """Block-diagonal Phi: x3 carries no information on x1 once x2 is known."""
    X = gen_dgp2(DgpSpec(kind=DGP2, T=200_000, seed=9), 0).X
    x1, x2, x3 = X[:, 1], X[:, 2], X[:, 3]
    design = np.column_stack([np.ones_like(x2), x2])
    resid1 = x1 - design @ np.linalg.lstsq(design, x1, rcond=None)[0]
    resid3 = x3 - design @ np.linalg.lstsq(design, x3, rcond=None)[0]
    assert abs(np.corrcoef(resid3, resid1)[0, 1]) < 0.02


def test_generate_dataset_dispatch():
    assert generate_dataset(DgpSpec(kind=DGP1, T=30), 0).columns == ('x',)
    assert generate_dataset(DgpSpec(kind=DGP2, T=30), 0).X.shape == (30, 4)


def test_generator_rejects_wrong_kind():
    with pytest.raises(ConfigurationError):
        gen_dgp2(DgpSpec(kind=DGP1, T=30), 0)


@pytest.mark.parametrize("spec, fragment", [
    (DgpSpec(kind='dgp3'), "Unknown DGP"),
    (DgpSpec(error_mode='garch'), "error mode"),
    (DgpSpec(arch=(0.0, 0.4)), "ARCH"),
    (DgpSpec(arch=(1.0, 1.0)), "ARCH"),
    (DgpSpec(T=1), "T must"),
    (DgpSpec(rho_uv=1.5), "rho_uv"),
])
def test_validate_dgp_spec_failures(spec, fragment):
    valid, message = validate_dgp_spec(spec)
    assert valid is False
    assert fragment in message


def test_model_spec_for_each_dgp():
    small = model_spec_for(DGP1, 0.25)
    assert small.idx1 == () and small.idx2_extra == (0,)
    assert small.include_intercept is False
    var = model_spec_for(DGP2, 0.4)
    assert var.idx1 == (0,) and var.idx2_extra == (1, 2, 3)
    assert var.include_intercept is True
    assert var.pi0 == 0.4


# Experiment grid

def test_grid_from_mapping_normalizes_values():
    grid = ExperimentGrid.from_mapping({
        'name': 'cfg', 'T': 250, 'phi1': [0.75, 0.95], 'lrv': ['hom', 'nw'],
        'variants': ['dm', {'variant': 's0', 'lambda1': 1.0, 'lambda2': 0.5}],
        'n_reps': 200,
    })
    assert grid.T == (250,)
    assert grid.phi1 == (0.75, 0.95)
    assert grid.variants[0].variant == 'dm'
    assert grid.variants[1].lambda2 == 0.5


@pytest.mark.parametrize("raw", [
    {'replications': 100},
    {'variants': [{'variant': 's0', 'lambda3': 0.5}]},
    {'variants': [3]},
    {'n_reps': 50},
    {'T': [10]},
    {'lrv': ['qs']},
    {'variants': [{'variant': 's0', 'lambda1': 0.9, 'lambda2': 0.9}]},
])
def test_grid_from_mapping_rejects(raw):
    with pytest.raises(ConfigurationError):
        ExperimentGrid.from_mapping(raw)


def test_statistic_configs_cross_lrv_methods():
    """Every variant under every long-run variance method, without duplicates."""
    grid = _small_grid(lrv=('hom', 'nw', 'HOM'))
    configs = grid.statistic_configs()
    assert len(configs) == 4
    assert {c.lrv_method for c in configs} == {'homoskedastic', 'newey_west'}


def test_design_points_product():
    grid = _small_grid(T=(100, 200), phi1=(0.75, 0.95), beta=(0.0, 0.5), error_mode=('gaussian', 'arch'))
    assert len(grid.design_points()) == 16


def test_design_points_dgp2_has_no_phi():
    grid = _small_grid(dgp=DGP2, phi1=(0.75, 0.95), beta=(0.0, 1.0))
    points = grid.design_points()
    assert len(points) == 2
    assert all(point.phi1 is None for point in points)
    assert points[1].dgp_spec(grid).beta_vec == pytest.approx((0.15, 0.15, -0.15))


def test_validate_grid_success():
    valid, message = validate_grid(_small_grid())
    assert valid is True


# Replication outcomes

def test_reduce_bits_excludes_negative():
    frequency, n_valid, n_excluded = reduce_bits(np.array([REJECT, ACCEPT, EXCLUDED, REJECT], dtype=np.int8))
    assert frequency == pytest.approx(2.0 / 3.0)
    assert (n_valid, n_excluded) == (3, 1)


def test_reduce_bits_all_excluded():
    assert reduce_bits(np.full(4, EXCLUDED, dtype=np.int8)) == (None, 0, 4)


def test_replicate_once_outcomes_are_bits():
    grid = _small_grid()
    point = grid.design_points()[0]
    bits = replicate_once(point.dgp_spec(grid), model_spec_for(DGP1, grid.pi0), grid.statistic_configs(), 0)
    assert bits.dtype == np.int8
    assert bits.shape == (2,)
    assert set(bits.tolist()) <= {REJECT, ACCEPT}


def test_replicate_once_excludes_failed_fit(mocker):
    """A singular recursive fit excludes the replication for every statistic."""
    mocker.patch('services.simulation_service.generate_errors',
                 side_effect=SingularMatrixError("Gram matrix singular", pivot=0, t=30))
    grid = _small_grid()
    point = grid.design_points()[0]
    bits = replicate_once(point.dgp_spec(grid), model_spec_for(DGP1, grid.pi0), grid.statistic_configs(), 0)
    assert list(bits) == [EXCLUDED, EXCLUDED]


# Experiments

def test_run_experiment_smoke():
    """100 replications at T = 100 under the null."""
    lines = []
    report = run_experiment(_small_grid(), progress=lines.append)
    assert len(report.cells) == 2
    assert len(lines) == 1
    assert lines[0].startswith('[1/1] T=100')
    for cell in report.cells:
        assert 0.0 <= cell.frequency <= 0.3
        assert cell.n_valid + cell.n_excluded == 100
        assert cell.mc_se == pytest.approx(math.sqrt(cell.frequency * (1 - cell.frequency) / cell.n_valid))
    assert report.find(variant='s0_adj', lambda2=0.9).lrv == 'hom'
    assert report.find(variant='dm').lambda1 is None


def test_run_experiment_independent_of_block_order():
    """Block evaluation order does not change any frequency."""
    serial = run_experiment(_small_grid())
    pool = Mock(spec=ReplicationPool)
    pool.map.side_effect = _reversed_map
    pooled = run_experiment(_small_grid(), pool=pool)
    assert [c.frequency for c in serial.cells] == [c.frequency for c in pooled.cells]
    assert pool.map.call_count == 1
    assert len(pool.map.call_args.args[1]) == 2


def test_run_experiment_same_seed_same_report():
    first = run_experiment(_small_grid(), master_seed=11)
    second = run_experiment(_small_grid(seed=0), master_seed=11)
    assert [c.frequency for c in first.cells] == [c.frequency for c in second.cells]
    assert first.master_seed == 11


def test_run_experiment_flags_excluded_replications(mocker):
    """One singular fit in 100 replications is an exclusion rate of 1%."""
    calls = {'n': 0}

    def failing_once(data, spec):
        calls['n'] += 1
        if calls['n'] == 1:
            raise SingularMatrixError("Gram matrix singular", pivot=0, t=25)
        return generate_errors(data, spec)

    mocker.patch('services.simulation_service.generate_errors', side_effect=failing_once)
    pool = Mock(spec=ReplicationPool)
    pool.map.side_effect = _inline_map
    report = run_experiment(_small_grid(), pool=pool)
    for cell in report.cells:
        assert cell.n_excluded == 1
        assert cell.exclusion_rate == pytest.approx(0.01)
        assert cell.flagged is True


def test_run_experiment_rejects_invalid_overrides():
    with pytest.raises(ConfigurationError):
        run_experiment(_small_grid(), n_reps=10)


@pytest.mark.slow
def test_run_experiment_worker_count_does_not_matter():
    serial = run_experiment(_small_grid(n_reps=200), workers=1)
    parallel = run_experiment(_small_grid(n_reps=200), workers=2)
    assert [c.frequency for c in serial.cells] == [c.frequency for c in parallel.cells]


# Reports

def _cell(**overrides):
    values = dict(variant='s0', lambda1=1.0, lambda2=0.9, tau0=None, T=250, phi1=0.95, beta=0.0,
                  error_mode='gaussian', lrv='hom', frequency=0.1, n_valid=100, n_excluded=0,
                  exclusion_rate=0.0, flagged=False, mc_se=0.03)
    values.update(overrides)
    return CellResult(**values)


def test_cell_matches_float_tolerance():
    cell = _cell(lambda2=0.1 + 0.8)
    assert cell.matches(variant='s0', lambda2=0.9)
    assert not cell.matches(T=500)


def test_report_find_returns_none_when_missing():
    report = ExperimentReport(name='r', dgp=DGP1, n_reps=100, master_seed=0, pi0=0.25, alpha=0.1, elapsed=0.0,
                              cells=[_cell()])
    assert report.find(variant='cw') is None
    assert report.find(T=250) is report.cells[0]


def test_report_dict_round_trip():
    report = ExperimentReport(name='r', dgp=DGP1, n_reps=100, master_seed=3, pi0=0.25, alpha=0.1, elapsed=1.5,
                              cells=[_cell(), _cell(variant='dm', lambda1=None, lambda2=None)])
    assert ExperimentReport.from_dict(report.to_dict()) == report


def test_report_from_malformed_dict():
    with pytest.raises(ConfigurationError):
        ExperimentReport.from_dict({'name': 'r', 'cells': []})


def test_simulation_module_exposes_block_size():
    assert simulation_service.BLOCK_SIZE == 50
