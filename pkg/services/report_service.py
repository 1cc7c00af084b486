"""
Report Service Module - Table emission for experiment reports
Lays rejection frequencies out the way the published size and power tables
do, or as a generic one-row-per-cell table, in CSV, JSON or text form.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import pandas as pd

from errors import ConfigurationError
from services.power_service import beta_gamma_map
from services.simulation_service import ExperimentReport

logger = logging.getLogger(__name__)

GAP = 'NA'
FORMATS = ('csv', 'json', 'text')
GENERIC = 'generic'

S0_LAMBDAS = (0.5, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
SBAR_LAMBDAS = S0_LAMBDAS + (1.0,)
POWER_BETAS = (0.0, -1.5, -1.75, -2.0, -2.25, -2.5, -3.0, -3.5)
POWER_T = 500
SIZE_T = (250, 500, 1000)
PHIS = (0.75, 0.95, 0.98)

HOMOSKEDASTIC = ('gaussian', 'hom', 'Conditional Homoskedasticity')
UNCORRECTED = ('arch', 'hom', 'Conditional Heteroskedasticity (uncorrected)')
NEWEY_WEST = ('arch', 'nw', 'Conditional Heteroskedasticity (Newey-West)')


@dataclass(frozen=True)
class Line:
    """A row or column: its label and the cell fields it pins down."""
    label: str
    match: Tuple[Tuple[str, object], ...]


@dataclass(frozen=True)
class Block:
    title: str
    match: Tuple[Tuple[str, object], ...]
    rows: Tuple[Line, ...]
    columns: Tuple[Line, ...]


@dataclass(frozen=True)
class TableLayout:
    name: str
    title: str
    blocks: Tuple[Block, ...]
    header: Tuple[Tuple[str, Tuple[str, ...]], ...] = field(default=())


def _family(tau0: Optional[float]) -> Dict:
    if tau0 is None:
        return {'name': 'S0(1,l2)', 'unadjusted': 's0', 'adjusted': 's0_adj', 'pin': (('lambda1', 1.0),)}
    return {'name': f'Sbar({tau0:g},l2)', 'unadjusted': 'sbar', 'adjusted': 'sbar_adj', 'pin': (('tau0', tau0),)}


def _statistic_line(label: str, variant: str, pin, lambda2: float) -> Line:
    return Line(label, (('variant', variant),) + pin + (('lambda2', lambda2),))


def _size_layout(name: str, title: str, tau0: Optional[float], lambdas, blocks_by) -> TableLayout:
    """Rows T, columns lambda2 plus a DM/CW side column, one block per (adjustment, block key)."""
    family = _family(tau0)
    blocks = []
    for adjusted in (False, True):
        variant = family['adjusted'] if adjusted else family['unadjusted']
        side = 'cw' if adjusted else 'dm'
        columns = tuple(_statistic_line(f'{l2:.3f}', variant, family['pin'], l2) for l2 in lambdas)
        columns += (Line(side.upper(), (('variant', side),)),)
        rows = tuple(Line(f'T={T}', (('T', T),)) for T in SIZE_T)
        for block_title, match in blocks_by:
            label = family['name'] + (' adjusted' if adjusted else '')
            blocks.append(Block(f'{label} {block_title}', match, rows, columns))
    return TableLayout(name, title, tuple(blocks))


def _power_layout(name: str, title: str, tau0: Optional[float], regime) -> TableLayout:
    """Columns beta (with a gamma header), rows lambda2 plus a DM/CW side row, blocks phi1."""
    family = _family(tau0)
    lambdas = (0.8, 0.85, 0.9, 0.95) + (() if tau0 is None else (1.0,))
    mode, lrv, _ = regime
    columns = tuple(Line(f'{b:.3f}', (('beta', b),)) for b in POWER_BETAS)
    header = (
        ('gamma', tuple(f'{beta_gamma_map(b, POWER_T):.3f}' for b in POWER_BETAS)),
        ('beta', tuple(f'{b:.3f}' for b in POWER_BETAS)),
    )
    blocks = []
    for adjusted in (False, True):
        variant = family['adjusted'] if adjusted else family['unadjusted']
        side = 'cw' if adjusted else 'dm'
        rows = tuple(_statistic_line(f'l2={l2:.3f}', variant, family['pin'], l2) for l2 in lambdas)
        rows += (Line(side.upper(), (('variant', side),)),)
        for phi in PHIS:
            match = (('phi1', phi), ('T', POWER_T), ('error_mode', mode), ('lrv', lrv))
            label = family['name'] + (' adjusted' if adjusted else '')
            blocks.append(Block(f'{label} phi1={phi}', match, rows, columns))
    return TableLayout(name, title, tuple(blocks), header)


def _regime_blocks(beta: float):
    return [(label, (('error_mode', mode), ('lrv', lrv), ('beta', beta)))
            for mode, lrv, label in (HOMOSKEDASTIC, UNCORRECTED, NEWEY_WEST)]


def _phi_blocks(regime):
    mode, lrv, label = regime
    return [(f'{label} phi1={phi}', (('phi1', phi), ('error_mode', mode), ('lrv', lrv), ('beta', 0.0)))
            for phi in PHIS]


def _build_registry() -> Dict[str, TableLayout]:
    registry = {}
    size_families = [(None, S0_LAMBDAS), (0.0, SBAR_LAMBDAS), (0.5, SBAR_LAMBDAS), (0.8, SBAR_LAMBDAS)]
    number = 1
    for tau0, lambdas in size_families:
        for regime in (HOMOSKEDASTIC, UNCORRECTED, NEWEY_WEST):
            name = f'paper_table_{number}'
            title = f'DGP1 empirical size, {_family(tau0)["name"]}, {regime[2]}'
            registry[name] = _size_layout(name, title, tau0, lambdas, _phi_blocks(regime))
            number += 1
    for tau0 in (None, 0.5, 0.8):
        for regime in (HOMOSKEDASTIC, NEWEY_WEST):
            name = f'paper_table_{number}'
            title = f'DGP1 empirical power (T={POWER_T}), {_family(tau0)["name"]}, {regime[2]}'
            registry[name] = _power_layout(name, title, tau0, regime)
            number += 1
    dgp2_lambdas = {
        19: (None, (0.5, 0.7, 0.75, 0.8, 0.85, 0.9, 0.925, 0.95)),
        20: (0.0, SBAR_LAMBDAS),
        21: (0.5, SBAR_LAMBDAS),
        22: (0.8, (0.5, 0.7, 0.75, 0.8, 0.85, 0.9, 0.925, 0.95, 1.0)),
        23: (None, S0_LAMBDAS),
        24: (0.0, (0.5, 0.7, 0.75, 0.8, 0.85, 0.9, 0.925, 0.95, 1.0)),
        25: (0.5, SBAR_LAMBDAS),
        26: (0.8, SBAR_LAMBDAS),
    }
    for number, (tau0, lambdas) in dgp2_lambdas.items():
        power = number >= 23
        name = f'paper_table_{number}'
        kind = 'power' if power else 'size'
        title = f'DGP2 empirical {kind}, {_family(tau0)["name"]}'
        registry[name] = _size_layout(name, title, tau0, lambdas, _regime_blocks(1.0 if power else 0.0))
    return registry


LAYOUTS: Dict[str, TableLayout] = _build_registry()


def available_layouts() -> List[str]:
    return [GENERIC] + list(LAYOUTS)


def generic_frame(report: ExperimentReport) -> pd.DataFrame:
    """One row per cell, in report order."""
    records = [asdict(cell) for cell in report.cells]
    if not records:
        return pd.DataFrame(columns=['variant', 'frequency'])
    return pd.DataFrame.from_records(records)


def layout_frame(report: ExperimentReport, layout: TableLayout) -> pd.DataFrame:
    """Rejection frequencies arranged by the layout; missing cells hold the gap marker."""
    records = []
    missing = 0
    for block in layout.blocks:
        for row in block.rows:
            record = {'block': block.title, 'row': row.label}
            for column in block.columns:
                criteria = dict(block.match + row.match + column.match)
                cell = report.find(**criteria)
                if cell is None or cell.frequency is None:
                    record[column.label] = GAP
                    missing += 1
                else:
                    record[column.label] = round(cell.frequency, 3)
            records.append(record)
    if missing:
        logger.info("layout %s: %d cells missing from report %s", layout.name, missing, report.name)
    return pd.DataFrame.from_records(records)


def emit_table(report: ExperimentReport, layout: str = GENERIC, fmt: str = 'csv') -> str:
    """
    Render a report.

    Args:
        report: experiment report
        layout: 'generic' or one of paper_table_1 .. paper_table_26
        fmt: csv, json or text

    Returns:
        the rendered document as a string
    """
    if fmt not in FORMATS:
        raise ConfigurationError(f"Unknown format {fmt!r}; choose from {', '.join(FORMATS)}.")
    if layout == GENERIC:
        if fmt == 'json':
            return json.dumps(report.to_dict(), indent=2, sort_keys=True)
        frame = generic_frame(report)
        title, header = report.name, ()
    else:
        try:
            table = LAYOUTS[layout]
        except KeyError:
            raise ConfigurationError(f"Unknown layout {layout!r}.") from None
        frame = layout_frame(report, table)
        title, header = table.title, table.header

    if fmt == 'csv':
        return frame.to_csv(index=False, na_rep=GAP)
    if fmt == 'json':
        return json.dumps({
            'layout': layout,
            'title': title,
            'header': {label: list(values) for label, values in header},
            'rows': frame.to_dict(orient='records'),
        }, indent=2)
    lines = [title]
    lines.extend(f'{label}: ' + ' '.join(values) for label, values in header)
    lines.append(frame.to_string(index=False, na_rep=GAP))
    return '\n'.join(lines) + '\n'


def parse_report_json(text: str) -> ExperimentReport:
    """Inverse of emit_table(report, 'generic', 'json')."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"Report is not valid JSON: {exc}") from None
    return ExperimentReport.from_dict(data)
