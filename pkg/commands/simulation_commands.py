"""
Simulation Commands - run Monte Carlo size/power experiments from a grid file
"""

import logging
import os

import click

from dataio import load_grid_config, write_text
from errors import ConfigurationError
from services.report_service import FORMATS, emit_table
from services.simulation_service import ExperimentGrid, run_experiment

from .common import reported_errors

logger = logging.getLogger(__name__)

SEED_ENV = 'NESTCAST_SEED'


def _seed_override(seed):
    """NESTCAST_SEED, when set, wins over --seed."""
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == '':
        return seed
    try:
        return int(env)
    except ValueError:
        raise ConfigurationError(f"{SEED_ENV} must be an integer, got {env!r}.") from None


@click.command('simulate')
@click.option('--config', 'config_path', required=True,
              help='YAML grid file, or the name of a bundled grid (e.g. table1_subset).')
@click.option('--reps', type=int, default=None, help='Replications per cell (overrides the grid).')
@click.option('--seed', type=int, default=None, help=f'Master seed (overrides the grid; {SEED_ENV} overrides both).')
@click.option('--workers', type=int, default=None, help='Worker processes (overrides the grid).')
@click.option('--out-csv', type=click.Path(dir_okay=False), default=None, help='Write the cell-level CSV here.')
@click.option('--out-json', type=click.Path(dir_okay=False), default=None, help='Write the full JSON report here.')
@click.option('--layout', default=None, help="Table layout for stdout: 'generic' or paper_table_1..paper_table_26.")
@click.option('--format', 'fmt', type=click.Choice(FORMATS), default='text', show_default=True,
              help='Format of the table printed to stdout.')
def simulate_cmd(config_path, reps, seed, workers, out_csv, out_json, layout, fmt):
    """Estimate rejection frequencies over an experiment grid."""
    with reported_errors():
        grid = ExperimentGrid.from_mapping(load_grid_config(config_path))
        report = run_experiment(grid, n_reps=reps, master_seed=_seed_override(seed), workers=workers,
                                progress=lambda line: click.echo(line, err=True))
        write_text(out_csv, emit_table(report, 'generic', 'csv'))
        write_text(out_json, emit_table(report, 'generic', 'json') + '\n')
        click.echo(emit_table(report, layout or grid.layout or 'generic', fmt), nl=False)
        click.echo(f"finished {len(report.cells)} cells in {report.elapsed:.1f}s", err=True)
