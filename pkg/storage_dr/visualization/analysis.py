import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import pandas as pd

from storage_dr.exceptions import MismatchedRunsError, ScenarioError

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ['t', 'p', 'q', 'r', 's', 'l_tilde', 'd_l', 'd_c', 'd_s', 'h_s', 'r_c',
                 'e_before', 'e_after', 'cost']
FLOAT_FORMAT = '%.17g'
ENERGY_WINDOW = (101, 400)


@dataclass(frozen=True)
class TraceRecord:
    t: int
    p: float
    q: float
    r: float
    s: str
    l_tilde: float
    d_l: float
    d_c: float
    d_s: float
    h_s: float
    r_c: float
    e_before: float
    e_after: float
    cost: float

    @classmethod
    def from_slot(cls, t, x, a, e_before, e_after, cost):
        return cls(t, x.p, x.q, x.r, x.s, a.l_tilde, a.d_l, a.d_c, a.d_s, a.h_s, a.r_c,
                   e_before, e_after, cost)


@dataclass
class Metrics:
    '''
    Summary of one run.

    Args:
        average_cost(float): mean slot cost in cents
        standard_error(float): batch-means standard error of average_cost
        min_energy, max_energy(float): extremes of E over the run in kWh
        violations(dict): count per monitored constraint
        drift_margin_min(float): smallest slack of the drift inequality
    '''
    controller: str
    v: float
    seed: int
    scenario: str
    slots: int
    average_cost: float
    standard_error: float
    min_energy: float
    max_energy: float
    capacity: float
    violations: dict = field(default_factory=dict)
    drift_margin_min: float = float('inf')

    @property
    def violation_count(self):
        return sum(self.violations.values())

    def to_dict(self):
        values = asdict(self)
        if math.isinf(values['drift_margin_min']):
            values['drift_margin_min'] = None
        return values


def batch_means_se(costs, batches=20):
    '''
    Standard error of the mean of a correlated series by batch means.
    '''
    costs = np.asarray(costs, dtype=float)
    batches = min(batches, len(costs))
    if batches < 2:
        return float('nan')
    size = len(costs) // batches
    means = costs[:size * batches].reshape(batches, size).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(batches))


def summarize(trace, controller, v, seed, scenario, capacity, violations=None, drift=None):
    costs = np.array([rec.cost for rec in trace])
    energy = np.array([rec.e_before for rec in trace] + [trace[-1].e_after])
    return Metrics(
        controller=controller, v=float(v), seed=int(seed), scenario=scenario, slots=len(trace),
        average_cost=float(costs.mean()), standard_error=batch_means_se(costs),
        min_energy=float(energy.min()), max_energy=float(energy.max()), capacity=float(capacity),
        violations=dict(violations or {}),
        drift_margin_min=drift.min_margin if drift is not None else float('inf'),
    )


def trace_frame(trace):
    return pd.DataFrame([asdict(rec) for rec in trace], columns=TRACE_COLUMNS)


def trace_from_frame(df):
    missing = [col for col in TRACE_COLUMNS if col not in df.columns]
    if missing:
        raise ScenarioError(f'trace lacks columns {", ".join(missing)}')
    names = [f.name for f in fields(TraceRecord)]
    records = []
    for row in df[TRACE_COLUMNS].itertuples(index=False):
        values = dict(zip(names, row))
        values['t'] = int(values['t'])
        values['s'] = str(values['s'])
        for name in names[5:]:
            values[name] = float(values[name])
        for name in ('p', 'q', 'r'):
            values[name] = float(values[name])
        records.append(TraceRecord(**values))
    return records


def write_trace(trace, path):
    try:
        trace_frame(trace).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    except OSError as err:
        raise OSError(f'cannot write trace to {path}: {err}') from err
    return path


def read_trace(path):
    try:
        df = pd.read_csv(path, dtype={'s': str}, keep_default_na=False, float_precision='round_trip')
    except OSError as err:
        raise OSError(f'cannot read trace {path}: {err}') from err
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise ScenarioError(f'cannot parse trace {path}: {err}') from err
    return trace_from_frame(df)


def energy_series(trace, window=ENERGY_WINDOW):
    '''
    Stored energy E(t) at the start of slots window[0]..window[1] (inclusive).
    '''
    lower, upper = window
    rows = [(rec.t, rec.e_before) for rec in trace if lower <= rec.t <= upper]
    return pd.DataFrame(rows, columns=['t', 'energy'])


def savings_percent(base_cost, cost):
    '''
    Relative saving against a baseline; the denominator is |base_cost| so a
    run that turns the cost into a profit saves more than 100%.
    '''
    if base_cost == 0:
        return 0. if cost == 0 else math.copysign(math.inf, -cost)
    return (base_cost - cost) / abs(base_cost) * 100.


def metrics_frame(runs):
    rows = []
    for m in runs:
        row = m.to_dict()
        row.pop('violations')
        row['violation_count'] = m.violation_count
        rows.append(row)
    return pd.DataFrame(rows)


def avg_cost_vs_v(runs):
    '''Mean average cost and its standard error per (controller, V) over seeds.'''
    df = metrics_frame(runs)
    grouped = df.groupby(['controller', 'v'], sort=True)['average_cost']
    table = grouped.agg(['mean', 'std', 'count']).reset_index()
    table['standard_error'] = (table['std'] / np.sqrt(table['count'])).fillna(0.)
    table = table.rename(columns={'mean': 'average_cost', 'count': 'runs'})
    return table[['controller', 'v', 'average_cost', 'standard_error', 'runs']]


def compare_runs(runs, baseline='greedy'):
    '''
    Compares every (controller, V) against the baseline controller at the
    same V, averaged over seeds.

    Returns:
        pd.DataFrame with controller, v, average_cost, base_cost, savings_percent

    Raises:
        MismatchedRunsError: runs from different scenarios, missing baselines
            or different seed sets
    '''
    runs = list(runs)
    if not runs:
        return pd.DataFrame(columns=['controller', 'v', 'average_cost', 'base_cost', 'savings_percent'])
    scenarios = {m.scenario for m in runs}
    if len(scenarios) > 1:
        raise MismatchedRunsError(f'runs come from different scenarios: {", ".join(sorted(scenarios))}')

    seeds = {}
    for m in runs:
        seeds.setdefault((m.controller, m.v), set()).add(m.seed)
    table = avg_cost_vs_v(runs)
    base = table[table['controller'] == baseline].set_index('v')['average_cost']
    rows = []
    for _, row in table[table['controller'] != baseline].iterrows():
        if row['v'] not in base.index:
            raise MismatchedRunsError(f'no {baseline} run at V={row["v"]:g}')
        if seeds[(row['controller'], row['v'])] != seeds[(baseline, row['v'])]:
            raise MismatchedRunsError(
                f'{row["controller"]} and {baseline} at V={row["v"]:g} use different seeds')
        base_cost = float(base.loc[row['v']])
        rows.append({
            'controller': row['controller'], 'v': row['v'], 'average_cost': row['average_cost'],
            'base_cost': base_cost, 'savings_percent': savings_percent(base_cost, row['average_cost']),
        })
    return pd.DataFrame(rows, columns=['controller', 'v', 'average_cost', 'base_cost', 'savings_percent'])


def _write(path, writer):
    try:
        writer(path)
    except OSError as err:
        raise OSError(f'cannot write {path}: {err}') from err
    return path


def emit_outputs(trace, metrics, path, fmt='csv', window=ENERGY_WINDOW):
    '''
    Writes trace.csv, energy_series.csv and metrics.json into the directory path.

    Returns:
        list of written file paths
    '''
    if fmt != 'csv':
        raise ValueError(f'unsupported output format {fmt!r}')
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as err:
        raise OSError(f'cannot create output directory {path}: {err}') from err

    written = [write_trace(trace, os.path.join(path, 'trace.csv'))]
    series = energy_series(trace, window)
    written.append(_write(os.path.join(path, 'energy_series.csv'),
                          lambda p: series.to_csv(p, index=False, float_format=FLOAT_FORMAT)))

    def dump(p):
        with open(p, 'w') as handle:
            json.dump(metrics.to_dict(), handle, indent=2)
            handle.write('\n')

    written.append(_write(os.path.join(path, 'metrics.json'), dump))
    logger.info('Wrote %s', ', '.join(written))
    return written


def emit_sweep_outputs(runs, path, baseline='greedy'):
    '''
    Writes metrics.csv, avg_cost_vs_v.csv and, when the baseline ran,
    comparison.csv into the directory path.
    '''
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as err:
        raise OSError(f'cannot create output directory {path}: {err}') from err

    written = []
    frame = metrics_frame(runs)
    written.append(_write(os.path.join(path, 'metrics.csv'),
                          lambda p: frame.to_csv(p, index=False, float_format=FLOAT_FORMAT)))
    series = avg_cost_vs_v(runs)
    written.append(_write(os.path.join(path, 'avg_cost_vs_v.csv'),
                          lambda p: series.to_csv(p, index=False, float_format=FLOAT_FORMAT)))
    if any(m.controller == baseline for m in runs) and any(m.controller != baseline for m in runs):
        comparison = compare_runs(runs, baseline)
        written.append(_write(os.path.join(path, 'comparison.csv'),
                              lambda p: comparison.to_csv(p, index=False, float_format=FLOAT_FORMAT)))
    logger.info('Wrote %s', ', '.join(written))
    return written
