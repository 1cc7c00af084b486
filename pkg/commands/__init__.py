"""
Commands Package - Register all CLI subcommands
"""

from .inference_commands import test_cmd
from .simulation_commands import simulate_cmd
from .power_commands import power_cmd, vcalc_cmd


def register_commands(cli):
    """Register all subcommands with the root group."""
    cli.add_command(test_cmd)
    cli.add_command(simulate_cmd)
    cli.add_command(power_cmd)
    cli.add_command(vcalc_cmd)
