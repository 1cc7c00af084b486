"""
Power Commands - local power curves and null-variance calculator
"""

import logging

import click
import numpy as np
import pandas as pd

from errors import ConfigurationError
from services.nesttest_service import SpreadConfig, v0, vbar
from services import power_service
from services.power_service import StationaryPowerInputs, alpf, alpf_curve, are, beta_gamma_map

from .common import parse_float_list, reported_errors

logger = logging.getLogger(__name__)


@click.command('power')
@click.option('--psi', type=float, multiple=True, help='Noncentrality value(s); repeat for a curve.')
@click.option('--gamma-grid', default=None, help='Comma-separated local drifts gamma.')
@click.option('--beta-grid', default=None, help='Comma-separated slopes beta, mapped to gamma with --T.')
@click.option('--T', 'T', type=int, default=500, show_default=True, help='Sample size for --beta-grid.')
@click.option('--persistent', is_flag=True, help='Use the local-to-unity beta/gamma scaling.')
@click.option('--alpha', type=float, default=0.10, show_default=True, help='Nominal one-sided test size.')
@click.option('--adjusted', is_flag=True, help='Power of the adjusted statistics.')
@click.option('--variant', type=click.Choice(['s0', 'sbar']), default='sbar', show_default=True,
              help='Statistic family for --gamma-grid/--beta-grid.')
@click.option('--lambda1', type=float, default=1.0, show_default=True,
              help='First-segment fraction of the s0 family.')
@click.option('--lambda2', type=float, default=0.9, show_default=True, help='Second-segment fraction.')
@click.option('--tau0', type=float, default=0.8, show_default=True,
              help='Lower end of the averaged first-segment fractions (sbar family).')
@click.option('--pi0', type=float, default=0.25, show_default=True, help='Forecast origin as a fraction of T.')
@click.option('--q22', type=float, default=1.0, show_default=True, help='Second moment of the omitted predictor.')
@click.option('--sigma', type=float, default=1.0, show_default=True, help='Square root of the squared-error LRV.')
def power_cmd(psi, gamma_grid, beta_grid, T, persistent, alpha, adjusted, variant, lambda1, lambda2, tau0,
              pi0, q22, sigma):
    """Print asymptotic local power as CSV."""
    with reported_errors():
        if not 0.0 < alpha < 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}.")
        if psi:
            frame = pd.DataFrame({'psi': list(psi), 'power': [alpf(p, alpha, adjusted) for p in psi]})
        elif gamma_grid or beta_grid:
            if beta_grid:
                betas = parse_float_list(beta_grid)
                gammas = [beta_gamma_map(b, T, persistent) for b in betas]
            else:
                gammas = parse_float_list(gamma_grid)
                betas = None
            name = variant + ('_adj' if adjusted else '')
            config = SpreadConfig(variant=name, lambda1=lambda1, lambda2=lambda2, tau0=tau0, alpha=alpha)
            inputs = StationaryPowerInputs(gamma=(1.0,), Q=np.array([[q22]]), sigma=sigma, pi0=pi0)
            frame = pd.DataFrame(alpf_curve(gammas, inputs, config))
            if betas is not None:
                frame.insert(0, 'beta', betas)
        else:
            raise ConfigurationError("Pass --psi, --gamma-grid or --beta-grid.")
        click.echo(frame.to_csv(index=False), nl=False)


@click.command('vcalc')
@click.option('--lambda1', type=float, default=None, help='With --lambda2: v0(lambda1, lambda2).')
@click.option('--lambda2', type=float, default=None, help='Second segment fraction.')
@click.option('--tau0', type=float, default=None, help='With --lambda2: vbar(tau0, lambda2).')
@click.option('--are', 'with_are', is_flag=True, help='With --lambda1, --lambda2, --tau0: relative efficiency.')
@click.option('--are-threshold', type=float, default=None, metavar='TAU0',
              help='lambda2 above which S0(1, lambda2) beats the optimal S-bar.')
@click.option('--optimal-lambda2', type=float, default=None, metavar='TAU0',
              help='Variance-minimizing lambda2 for S-bar.')
def vcalc_cmd(lambda1, lambda2, tau0, with_are, are_threshold, optimal_lambda2):
    """Print null variances and efficiency quantities as CSV."""
    with reported_errors():
        rows = []
        if with_are:
            if None in (lambda1, lambda2, tau0):
                raise ConfigurationError("--are needs --lambda1, --lambda2 and --tau0.")
            rows.append(('are', are(lambda1, lambda2, tau0)))
        else:
            if lambda2 is not None and lambda1 is not None:
                if lambda1 == lambda2:
                    raise ConfigurationError("variance degeneracy: lambda1 == lambda2")
                rows.append(('v0', v0(lambda1, lambda2)))
            if lambda2 is not None and tau0 is not None:
                rows.append(('vbar', vbar(tau0, lambda2)))
        if are_threshold is not None:
            rows.append(('are_threshold', power_service.are_threshold(are_threshold)))
        if optimal_lambda2 is not None:
            rows.append(('optimal_lambda2', power_service.optimal_lambda2(optimal_lambda2)))
        if not rows:
            raise ConfigurationError("Nothing to compute; see --help.")
        frame = pd.DataFrame(rows, columns=['quantity', 'value'])
        click.echo(frame.to_csv(index=False, float_format='%.7g'), nl=False)
