"""
Sample-path checks of a simulated trajectory: energy bounds, monotonicity
near the empty and full levels, energy availability, the per-slot drift
inequality and the internal consistency of a logged trace.
"""
import logging
from dataclasses import dataclass

import numpy as np

from storage_dr.exceptions import UnknownStateError
from storage_dr.modeling.system import ControlAction, ExogenousSample, slot_cost

logger = logging.getLogger(__name__)

BOUND_TOL = 1e-9
DRIFT_TOL = 1e-6


@dataclass(frozen=True)
class InvariantViolation:
    slot: int
    constraint: str
    detail: str


def _action(record):
    return ControlAction(record.l_tilde, record.d_l, record.d_c, record.d_s, record.h_s, record.r_c)


def monitor_invariants(trace, params, cfg, tol=BOUND_TOL):
    '''
    Checks every slot of a trace against the sample-path guarantees.

    Args:
        trace(list): TraceRecord per slot
        params(SystemParams): efficiencies and rates
        cfg(ControllerConfig): theta and capacity of the run

    Returns:
        list of InvariantViolation, empty for a clean trace
    '''
    empty = params.eta_e * min(params.l_max, params.c_dis)
    report = []
    for rec in trace:
        for label, e in (('e_before', rec.e_before), ('e_after', rec.e_after)):
            if e < -tol:
                report.append(InvariantViolation(rec.t, 'energy_lower', f'{label}={e:.10g} < 0'))
            if e > cfg.capacity + tol:
                report.append(InvariantViolation(
                    rec.t, 'energy_upper', f'{label}={e:.10g} > capacity={cfg.capacity:.10g}'))
        needed = params.eta_e * (rec.d_s + rec.h_s)
        if needed > rec.e_before + tol:
            report.append(InvariantViolation(
                rec.t, 'energy_availability', f'needs {needed:.10g} kWh, stored {rec.e_before:.10g} kWh'))
        if rec.e_before < empty and rec.e_after < rec.e_before - tol:
            report.append(InvariantViolation(
                rec.t, 'monotone_empty', f'E fell from {rec.e_before:.10g} below {empty:.10g}'))
        if rec.e_before > cfg.theta and rec.e_after > rec.e_before + tol:
            report.append(InvariantViolation(
                rec.t, 'monotone_full', f'E rose from {rec.e_before:.10g} above theta={cfg.theta:.10g}'))
    return report


@dataclass
class DriftDiagnostics:
    '''
    Per-slot Lyapunov value g = (E - theta)^2 / 2 and both sides of
    g(t+1) - g(t) <= B - (E - theta)(eta_e discharge - eta_i charge).
    '''
    g: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    b_const: float
    tolerance: float = DRIFT_TOL

    @property
    def margin(self):
        return self.rhs - self.lhs

    @property
    def min_margin(self):
        return float(self.margin.min()) if len(self.margin) else float('inf')

    @property
    def passed(self):
        return bool(np.all(self.lhs <= self.rhs + self.tolerance))

    @property
    def failed_slots(self):
        return np.flatnonzero(self.lhs > self.rhs + self.tolerance)


def drift_check(trace, cfg, params, tol=DRIFT_TOL):
    '''
    Returns:
        (DriftDiagnostics, passed)
    '''
    e_before = np.array([rec.e_before for rec in trace], dtype=float)
    e_after = np.array([rec.e_after for rec in trace], dtype=float)
    discharge = np.array([rec.d_s + rec.h_s for rec in trace], dtype=float)
    charge = np.array([rec.d_c + rec.r_c for rec in trace], dtype=float)
    backlog = e_before - cfg.theta
    g = 0.5 * backlog ** 2
    lhs = 0.5 * (e_after - cfg.theta) ** 2 - g
    rhs = params.b_const - backlog * (params.eta_e * discharge - params.eta_i * charge)
    diagnostics = DriftDiagnostics(g=g, lhs=lhs, rhs=rhs, b_const=params.b_const, tolerance=tol)
    if not diagnostics.passed:
        logger.warning('drift inequality fails at %d slots, first at slot %d',
                       len(diagnostics.failed_slots), trace[int(diagnostics.failed_slots[0])].t)
    return diagnostics, diagnostics.passed


def check_trace_consistency(trace, params, disutility, mode, tol=1e-9):
    '''
    Checks a logged trace against itself: e_after follows the dynamics from
    e_before, consecutive records chain, and the logged cost is the slot cost.
    '''
    report = []
    previous = None
    for rec in trace:
        a = _action(rec)
        expected = rec.e_before - params.eta_e * a.discharge + params.eta_i * a.charge
        if abs(expected - rec.e_after) > tol * max(1., abs(expected)):
            report.append(InvariantViolation(
                rec.t, 'dynamics', f'e_after={rec.e_after:.17g}, dynamics give {expected:.17g}'))
        if previous is not None:
            if rec.t != previous.t + 1:
                report.append(InvariantViolation(rec.t, 'chain', f'slot {rec.t} follows slot {previous.t}'))
            elif abs(rec.e_before - previous.e_after) > tol * max(1., abs(rec.e_before)):
                report.append(InvariantViolation(
                    rec.t, 'chain',
                    f'e_before={rec.e_before:.17g} != previous e_after={previous.e_after:.17g}'))
        try:
            cost = slot_cost(a, ExogenousSample(rec.p, rec.q, rec.r, rec.s), disutility, mode)
        except UnknownStateError as err:
            report.append(InvariantViolation(rec.t, 'cost', str(err)))
        else:
            if abs(cost - rec.cost) > tol * max(1., abs(cost)):
                report.append(InvariantViolation(
                    rec.t, 'cost', f'logged {rec.cost:.17g}, recomputed {cost:.17g}'))
        previous = rec
    return report
