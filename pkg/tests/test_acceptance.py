# Acceptance-scale Monte Carlo runs on the bundled grids (slow)

import math
import time

import pytest

from dataio import load_grid_config
from services.simulation_service import ExperimentGrid, run_experiment

pytestmark = pytest.mark.slow

BETAS = (0.0, -1.5, -1.75, -2.0, -2.25, -2.5, -3.0, -3.5)


@pytest.fixture(scope='module')
def size_report():
    """DGP1 at T = 1000, 5000 replications per cell."""
    return run_experiment(ExperimentGrid.from_mapping(load_grid_config('acceptance_size')))


@pytest.fixture(scope='module')
def power_report():
    """DGP1 at T = 500 over the slope grid, 2000 replications per cell."""
    return run_experiment(ExperimentGrid.from_mapping(load_grid_config('acceptance_power')))


def _frequency(report, **criteria):
    cell = report.find(**criteria)
    assert cell is not None, criteria
    assert not cell.flagged, cell
    return cell


def _at_least(high, low, n_se=2.0):
    """high >= low up to n_se combined Monte Carlo standard errors."""
    se = math.sqrt(high.mc_se ** 2 + low.mc_se ** 2)
    return high.frequency >= low.frequency - n_se * se


# Size

@pytest.mark.parametrize("phi1", [0.75, 0.95])
def test_adjusted_size_homoskedastic(size_report, phi1):
    cell = _frequency(size_report, variant='s0_adj', lambda2=0.9, phi1=phi1, error_mode='gaussian', lrv='hom')
    assert cell.frequency == pytest.approx(0.104, abs=0.02)


def test_adjusted_size_robust_to_persistence(size_report):
    frequencies = [
        _frequency(size_report, variant='s0_adj', phi1=phi1, error_mode='gaussian', lrv='hom').frequency
        for phi1 in (0.75, 0.95, 0.98)
    ]
    assert max(frequencies) - min(frequencies) < 0.025


@pytest.mark.parametrize("phi1", [0.75, 0.95])
def test_baselines_size_homoskedastic(size_report, phi1):
    """DM is undersized for nested models; CW sits near but below nominal."""
    dm = _frequency(size_report, variant='dm', phi1=phi1, error_mode='gaussian', lrv='hom')
    cw = _frequency(size_report, variant='cw', phi1=phi1, error_mode='gaussian', lrv='hom')
    assert dm.frequency <= 0.02
    assert 0.03 <= cw.frequency <= 0.09


def test_arch_distorts_uncorrected_size(size_report):
    cell = _frequency(size_report, variant='s0_adj', phi1=0.75, error_mode='arch', lrv='hom')
    assert cell.frequency >= 0.14


def test_newey_west_repairs_arch_size(size_report):
    cell = _frequency(size_report, variant='s0_adj', phi1=0.75, error_mode='arch', lrv='nw')
    assert 0.09 <= cell.frequency <= 0.15


# Power

def test_s0_adj_power_anchor(power_report):
    cell = _frequency(power_report, variant='s0_adj', lambda1=1.0, lambda2=0.9, phi1=0.95, beta=-2.0)
    assert cell.frequency >= 0.90


def test_sbar_adj_power_anchor(power_report):
    cell = _frequency(power_report, variant='sbar_adj', tau0=0.8, lambda2=0.9, phi1=0.75, beta=-2.0)
    assert 0.75 <= cell.frequency <= 0.95


@pytest.mark.parametrize("lambda2", [0.8, 0.85, 0.9, 0.95])
def test_adjusted_power_dominates(power_report, lambda2):
    for phi1 in (0.75, 0.95, 0.98):
        for beta in BETAS[1:]:
            plain = _frequency(power_report, variant='s0', lambda2=lambda2, phi1=phi1, beta=beta)
            adjusted = _frequency(power_report, variant='s0_adj', lambda2=lambda2, phi1=phi1, beta=beta)
            assert _at_least(adjusted, plain), (phi1, beta)


@pytest.mark.parametrize("variant, pin", [
    ('s0_adj', {'lambda1': 1.0, 'lambda2': 0.9}),
    ('sbar_adj', {'tau0': 0.8, 'lambda2': 0.9}),
])
def test_power_monotone_in_slope(power_report, variant, pin):
    for phi1 in (0.75, 0.95, 0.98):
        cells = [_frequency(power_report, variant=variant, phi1=phi1, beta=beta, **pin) for beta in BETAS]
        for smaller, larger in zip(cells, cells[1:]):
            assert _at_least(larger, smaller), (phi1, larger.beta)


@pytest.mark.parametrize("variant, pin", [
    ('s0_adj', {'lambda1': 1.0, 'lambda2': 0.9}),
    ('sbar_adj', {'tau0': 0.8, 'lambda2': 0.9}),
])
def test_power_monotone_in_persistence(power_report, variant, pin):
    cells = [_frequency(power_report, variant=variant, phi1=phi1, beta=-2.0, **pin) for phi1 in (0.75, 0.95, 0.98)]
    for smaller, larger in zip(cells, cells[1:]):
        assert _at_least(larger, smaller)


@pytest.mark.parametrize("beta", [-1.5, -1.75])
def test_sbar_power_peaks_near_optimal_lambda2(power_report, beta):
    """tau0 = 0.8 puts the variance-minimizing lambda2 at 0.9."""
    best = _frequency(power_report, variant='sbar_adj', tau0=0.8, lambda2=0.9, phi1=0.75, beta=beta)
    for lambda2 in (0.5, 0.7, 0.8, 1.0):
        other = _frequency(power_report, variant='sbar_adj', tau0=0.8, lambda2=lambda2, phi1=0.75, beta=beta)
        assert _at_least(best, other), lambda2


# Determinism

def test_worker_count_does_not_change_table_cell():
    raw = load_grid_config('table1_subset')
    raw.update(T=[1000], phi1=[0.95], n_reps=2000)
    grid = ExperimentGrid.from_mapping(raw)
    serial = run_experiment(grid, workers=1)
    parallel = run_experiment(grid, workers=8)
    assert [c.frequency for c in serial.cells] == [c.frequency for c in parallel.cells]


def test_single_table_cell_runs_within_a_minute():
    """s0_adj(1, 0.9) at T = 1000 with 2000 replications on eight workers."""
    raw = load_grid_config('table1_subset')
    raw.update(T=[1000], phi1=[0.95], n_reps=2000, variants=[{'variant': 's0_adj', 'lambda1': 1.0, 'lambda2': 0.9}])
    grid = ExperimentGrid.from_mapping(raw)
    started = time.perf_counter()
    report = run_experiment(grid, workers=8)
    assert time.perf_counter() - started <= 60.0
    assert len(report.cells) == 1
    assert report.cells[0].n_valid + report.cells[0].n_excluded == 2000
