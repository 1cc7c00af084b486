"""
Shared helpers for the command modules
"""

from contextlib import contextmanager
from typing import List

import click

from errors import NestcastError, exit_code_for, format_error_line


@contextmanager
def reported_errors():
    """Turn service errors into one stderr line and the mapped exit code."""
    try:
        yield
    except NestcastError as exc:
        click.echo(format_error_line(exc), err=True)
        raise click.exceptions.Exit(exit_code_for(exc))


def split_columns(ctx, param, value) -> List[str]:
    """Click callback: 'a,b' or repeated flags -> ['a', 'b']."""
    names = []
    for item in value or ():
        names.extend(part.strip() for part in item.split(',') if part.strip())
    return names


def parse_float_list(text: str) -> List[float]:
    """'0,-1.5,-2' -> [0.0, -1.5, -2.0]."""
    try:
        return [float(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from None
