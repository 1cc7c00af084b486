# Unit Tests: long-run variance estimators

import numpy as np
import pytest
from scipy.signal import lfilter

from errors import ConfigurationError, DegenerateVarianceError
from services import lrv_service
from services.forecast_service import generate_errors
from services.lrv_service import (
    HOMOSKEDASTIC, NEWEY_WEST, VARIANCE_FLOOR, auto_bandwidth, estimate_lrv, eta_series, normalize_method,
    sigma2_hom, sigma2_nw
)


# eta construction

def test_eta_constant_residuals_is_zero(mocker, predictive_data, single_predictor_spec):
    """Equal residuals have constant squares, so eta vanishes."""
    mocker.patch('services.lrv_service.fit_large_model_residuals',
                 return_value=np.full(predictive_data.T - 1, 2.5))
    eta = eta_series(predictive_data, single_predictor_spec)
    assert eta.size == predictive_data.T - single_predictor_spec.k0(predictive_data.T)
    assert np.all(eta == 0.0)


def test_eta_alternating_residuals_is_zero(mocker, predictive_data, single_predictor_spec):
    """Residuals +1, -1, ... square to ones."""
    residuals = np.where(np.arange(predictive_data.T - 1) % 2 == 0, 1.0, -1.0)
    mocker.patch('services.lrv_service.fit_large_model_residuals', return_value=residuals)
    assert np.all(eta_series(predictive_data, single_predictor_spec) == 0.0)


def test_eta_matches_two_pass_computation(predictive_data, single_predictor_spec):
    """Full-sample fit, out-of-sample index range, out-of-sample mean."""
    x = predictive_data.X[:-1, 0]
    y = predictive_data.y[1:]
    coef = (x @ y) / (x @ x)
    squared = (y - coef * x) ** 2
    k0 = single_predictor_spec.k0(predictive_data.T)
    tail = squared[k0 - 1:]
    expected = tail - tail.sum() / tail.size
    assert np.allclose(eta_series(predictive_data, single_predictor_spec), expected, atol=1e-12)


def test_eta_recursive_source_uses_forecast_errors(predictive_data, single_predictor_spec):
    """The recursive source demeans the large model's squared forecast errors."""
    e2sq = generate_errors(predictive_data, single_predictor_spec).e2 ** 2
    eta = eta_series(predictive_data, single_predictor_spec, residual_source='recursive')
    assert np.allclose(eta, e2sq - e2sq.mean())


def test_eta_unknown_source(predictive_data, single_predictor_spec):
    with pytest.raises(ConfigurationError):
        eta_series(predictive_data, single_predictor_spec, residual_source='rolling')


# Homoskedastic estimator

def test_sigma2_hom_simple():
    assert sigma2_hom([1.0, -1.0]).sigma2 == 1.0


def test_sigma2_hom_zero_is_degenerate():
    with pytest.raises(DegenerateVarianceError):
        sigma2_hom([0.0, 0.0])


def test_sigma2_hom_matches_mean_of_squares():
    """Brute-force sum over 200 values."""
    eta = np.random.default_rng(1).standard_normal(200)
    expected = sum(v * v for v in eta) / 200
    estimate = sigma2_hom(eta)
    assert estimate.sigma2 == pytest.approx(expected, rel=1e-12)
    assert estimate.method == HOMOSKEDASTIC
    assert estimate.n_used == 200


# Newey-West estimator

def test_sigma2_nw_zero_bandwidth_equals_hom():
    """No lags leaves the variance term only."""
    eta = np.random.default_rng(2).standard_normal(500)
    assert sigma2_nw(eta, 0).sigma2 == sigma2_hom(eta).sigma2


def test_sigma2_nw_hand_example():
    """gamma0 = 1, gamma1 = 0.25, weight 0.5."""
    estimate = sigma2_nw([1.0, 1.0, -1.0, -1.0], 1)
    assert estimate.sigma2 == pytest.approx(1.25, abs=1e-15)
    assert estimate.bandwidth == 1
    assert estimate.method == NEWEY_WEST


def test_sigma2_nw_ar1_long_run_variance():
    """AR(1) with coefficient 0.5 and unit shocks has long-run variance 4."""
    rng = np.random.default_rng(2024)
    eta = lfilter([1.0], [1.0, -0.5], rng.standard_normal(2_000_000))
    estimate = sigma2_nw(eta - eta.mean(), 100)
    assert estimate.sigma2 == pytest.approx(4.0, rel=0.05)


@pytest.mark.parametrize("n, expected", [(100, 4), (1000, 6), (100_000, 18)])
def test_auto_bandwidth(n, expected):
    assert auto_bandwidth(n) == expected


def test_sigma2_nw_auto_bandwidth_used():
    eta = np.random.default_rng(3).standard_normal(1000)
    assert sigma2_nw(eta, 'auto').bandwidth == 6
    assert sigma2_nw(eta, None).bandwidth == 6


@pytest.mark.parametrize("c", [0.5, 3.0])
def test_estimators_scale_quadratically(c):
    """sigma2(c eta) = c^2 sigma2(eta)."""
    eta = np.random.default_rng(4).standard_normal(300)
    assert sigma2_hom(c * eta).sigma2 == pytest.approx(c * c * sigma2_hom(eta).sigma2, rel=1e-12)
    assert sigma2_nw(c * eta, 5).sigma2 == pytest.approx(c * c * sigma2_nw(eta, 5).sigma2, rel=1e-12)


def test_sigma2_nw_zero_series_is_degenerate():
    with pytest.raises(DegenerateVarianceError):
        sigma2_nw(np.zeros(10), 2)


def test_sigma2_nw_allow_degenerate_floors():
    """Opt-in flooring flags the estimate instead of raising."""
    estimate = sigma2_nw(np.zeros(10), 2, allow_degenerate=True)
    assert estimate.sigma2 == VARIANCE_FLOOR
    assert estimate.degenerate is True


def test_sigma2_nw_bandwidth_out_of_range():
    with pytest.raises(ConfigurationError):
        sigma2_nw(np.ones(6), 6)


# Dispatch

@pytest.mark.parametrize("alias, canonical", [
    ('hom', HOMOSKEDASTIC), ('HOM', HOMOSKEDASTIC), ('nw', NEWEY_WEST), ('newey_west', NEWEY_WEST),
])
def test_normalize_method_aliases(alias, canonical):
    assert normalize_method(alias) == canonical


def test_normalize_method_unknown():
    with pytest.raises(ConfigurationError):
        normalize_method('qs')


def test_estimate_lrv_dispatch(mocker):
    """hom and nw route to their estimators."""
    eta = np.random.default_rng(5).standard_normal(50)
    spy = mocker.spy(lrv_service, 'sigma2_nw')
    assert estimate_lrv(eta, 'hom').method == HOMOSKEDASTIC
    assert spy.call_count == 0
    assert estimate_lrv(eta, 'nw', 3).bandwidth == 3
    assert spy.call_count == 1
