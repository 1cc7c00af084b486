"""
Main command-line entry point for nestcast.

This module provides the application factory for the click command group.
Subcommands are organized in separate modules in the commands package.
"""

import logging
import sys

import click

from commands import register_commands

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'
LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR']


def create_cli():
    """
    Application factory function to create and configure the CLI.

    Returns:
        click.Group: root command group with every subcommand registered
    """
    @click.group(context_settings={'help_option_names': ['-h', '--help']})
    @click.option('--log-level', type=click.Choice(LOG_LEVELS, case_sensitive=False), default='WARNING',
                  show_default=True, help='Logging threshold for diagnostics on stderr.')
    def cli(log_level):
        """Out-of-sample MSE-spread tests for nested forecasting models."""
        logging.basicConfig(level=getattr(logging, log_level.upper()), format=LOG_FORMAT,
                            stream=sys.stderr, force=True)

    # Register all subcommands
    register_commands(cli)

    return cli


if __name__ == '__main__':
    create_cli()(prog_name='nestcast')
