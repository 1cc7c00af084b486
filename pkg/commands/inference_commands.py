"""
Inference Commands - test a nested model pair on CSV data
"""

import json
import logging

import click

from dataio import load_dataset, write_text
from errors import ConfigurationError
from services.forecast_service import NestedModelSpec
from services.lrv_service import AUTO
from services.nesttest_service import VARIANTS, SpreadConfig, run_test, validate_spread_config

from .common import reported_errors, split_columns

logger = logging.getLogger(__name__)


def _bandwidth(value: str):
    if value.lower() == AUTO:
        return AUTO
    try:
        return int(value)
    except ValueError:
        raise ConfigurationError(f"--nw-bandwidth must be 'auto' or an integer, got {value!r}.") from None


@click.command('test')
@click.option('--input', 'input_path', required=True, type=click.Path(dir_okay=False),
              help='CSV file with a header row, rows in time order.')
@click.option('--target', required=True, help='Forecast target column.')
@click.option('--model1', multiple=True, callback=split_columns,
              help='Small-model predictor columns (comma-separated or repeated). May be empty.')
@click.option('--model2-extra', 'model2_extra', multiple=True, callback=split_columns, required=True,
              help='Extra predictor columns of the large model.')
@click.option('--intercept/--no-intercept', default=True, show_default=True,
              help='Include an intercept in both models.')
@click.option('--variant', type=click.Choice(VARIANTS), default='sbar_adj', show_default=True,
              help='Test statistic; s0_adj and sbar_adj add the second-segment correction.')
@click.option('--lambda1', type=float, default=1.0, show_default=True, help='First segment fraction (s0 variants).')
@click.option('--lambda2', type=float, default=0.9, show_default=True, help='Second segment fraction.')
@click.option('--tau0', type=float, default=0.8, show_default=True, help='Averaging start fraction (sbar variants).')
@click.option('--pi0', type=float, default=0.25, show_default=True, help='Forecast origin fraction.')
@click.option('--alpha', type=float, default=0.10, show_default=True, help='Test size.')
@click.option('--lrv', type=click.Choice(['hom', 'nw']), default='nw', show_default=True,
              help='Long-run variance estimator.')
@click.option('--nw-bandwidth', default=AUTO, show_default=True, help="Newey-West lag truncation or 'auto'.")
@click.option('--residual-source', type=click.Choice(['full_sample', 'recursive']), default='full_sample',
              show_default=True, help='Residuals feeding the variance estimate.')
@click.option('--output', type=click.Path(dir_okay=False), default=None, help='Write the JSON report here.')
def test_cmd(input_path, target, model1, model2_extra, intercept, variant, lambda1, lambda2, tau0, pi0,
             alpha, lrv, nw_bandwidth, residual_source, output):
    """Test equal out-of-sample MSE of two nested models."""
    with reported_errors():
        config = SpreadConfig(variant=variant, lambda1=lambda1, lambda2=lambda2, tau0=tau0, lrv_method=lrv,
                              alpha=alpha, nw_bandwidth=_bandwidth(nw_bandwidth), residual_source=residual_source)
        valid, message = validate_spread_config(config)
        if not valid:
            raise ConfigurationError(message)
        if set(model1) & set(model2_extra):
            raise ConfigurationError("collinearity: a column appears in both --model1 and --model2-extra")

        data = load_dataset(input_path, target, list(model1) + list(model2_extra))
        spec = NestedModelSpec(
            idx1=tuple(range(len(model1))),
            idx2_extra=tuple(range(len(model1), len(model1) + len(model2_extra))),
            include_intercept=intercept,
            pi0=pi0,
        )
        result = run_test(data, spec, config)
        document = json.dumps(result.to_report_dict(), indent=2)
        write_text(output, document + '\n')
        click.echo(document)
