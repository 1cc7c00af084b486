"""
Shared fixtures for the nestcast test suite
"""

import numpy as np
import pytest

from services.forecast_service import ForecastErrorPair, NestedModelSpec, TimeSeriesDataset


def make_predictive_dataset(T=200, beta=0.0, phi=0.9, seed=0):
    """y_{t+1} = beta x_t + u_{t+1} with an AR(1) predictor."""
    rng = np.random.default_rng(seed)
    x = np.zeros(T)
    v = rng.standard_normal(T)
    for t in range(1, T):
        x[t] = phi * x[t - 1] + v[t]
    y = rng.standard_normal(T)
    y[1:] += beta * x[:-1]
    return TimeSeriesDataset(y=y, X=x[:, None], columns=('x',))


def make_error_pair(P=40, seed=1, k0=10):
    """Fixed random error pair with e2 close to e1."""
    rng = np.random.default_rng(seed)
    e1 = rng.standard_normal(P)
    e2 = e1 - 0.3 * rng.standard_normal(P)
    return ForecastErrorPair(k0=k0, e1=e1, e2=e2)


@pytest.fixture
def predictive_data():
    return make_predictive_dataset()


@pytest.fixture
def single_predictor_spec():
    """Empty small model against one predictor without intercept."""
    return NestedModelSpec(idx1=(), idx2_extra=(0,), include_intercept=False, pi0=0.25)


@pytest.fixture
def error_pair():
    return make_error_pair()


@pytest.fixture
def csv_dataset(tmp_path):
    """CSV file written from a simulated dataset; returns its path."""
    data = make_predictive_dataset(T=120, beta=0.3, seed=7)
    lines = ['date,y,x,z']
    noise = np.random.default_rng(8).standard_normal(data.T)
    for t in range(data.T):
        lines.append(f'2000-{t:04d},{data.y[t]:.17g},{data.X[t, 0]:.17g},{noise[t]:.17g}')
    path = tmp_path / 'series.csv'
    path.write_text('\n'.join(lines) + '\n')
    return path
