from dotenv import load_dotenv, find_dotenv

load_dotenv(find_dotenv())

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from storage_dr.exceptions import ConfigurationError, EnergyAvailabilityError, TheoremViolationError
from storage_dr.modeling.controllers import ControllerConfig, make_controller
from storage_dr.modeling.dp_oracle import discretize, relative_value_iteration, rollout_policy
from storage_dr.modeling.lp_kernel import (
    brute_force_lp,
    lp_residuals,
    random_storage_lp,
    solve_storage_lp,
    verify_optimality,
)
from storage_dr.modeling.system import SystemParams, apply_storage_dynamics, check_feasibility, slot_cost
from storage_dr.utils.monitors import drift_check, monitor_invariants
from storage_dr.utils.rng import make_rng
from storage_dr.visualization.analysis import TraceRecord, batch_means_se, summarize

logger = logging.getLogger(__name__)

DEFAULT_V_LIST = (2., 5., 10., 20., 50.)


def thread_cap():
    '''
    Worker count for sweeps: STORAGE_DR_THREADS if set, else the CPU count.
    '''
    value = os.environ.get('STORAGE_DR_THREADS')
    if value is None or value == '':
        return os.cpu_count() or 1
    try:
        threads = int(value)
    except ValueError:
        raise ConfigurationError(f'STORAGE_DR_THREADS={value!r} is not an integer') from None
    if threads < 1:
        raise ConfigurationError(f'STORAGE_DR_THREADS must be positive, got {threads}')
    return threads


def run_simulation(controller, scenario, params, cfg, T, seed, e0=0., run_index=0, strict=True):
    '''
    Runs one controller against one scenario for T slots.

    Every slot draws a sample, asks the controller for an action, checks it
    against all constraints, books the cost and advances the storage. After
    the loop the trace goes through the invariant monitors and the drift
    check.

    Args:
        controller: object with decide(e, x), name and mode
        scenario: scenario with stream(seed, run_index, cfg)
        params(SystemParams): limits and efficiencies
        cfg(ControllerConfig): V, theta and capacity
        T(int): number of slots
        seed(int): seed of the exogenous stream
        e0(float): initial stored energy in kWh
        strict(bool): raise on the first violation instead of counting

    Returns:
        (Metrics, list of TraceRecord)

    Raises:
        TheoremViolationError: in strict mode, with the slot and constraint
    '''
    if T < 1:
        raise ConfigurationError(f'T must be >= 1, got {T}')
    if not -1e-9 <= e0 <= cfg.capacity + 1e-9:
        raise ConfigurationError(f'E(0)={e0} outside [0, {cfg.capacity:.6g}]')

    logger.info('Running %s on %s: V=%g, T=%d, seed=%d', controller.name, scenario.name, cfg.v, T, seed)
    stream = scenario.stream(seed, run_index, cfg)
    violations = {}
    trace = []
    e = float(e0)
    for t in range(T):
        _, x = stream.next(e)
        a = controller.decide(e, x)
        problems = check_feasibility(a, x, e, params)
        if problems:
            if strict:
                first = problems[0]
                raise TheoremViolationError(t, first.constraint, first.detail)
            for problem in problems:
                violations[problem.constraint] = violations.get(problem.constraint, 0) + 1
        try:
            e_after = apply_storage_dynamics(e, a, params)
        except EnergyAvailabilityError:
            e_after = e - params.eta_e * a.discharge + params.eta_i * a.charge
        cost = slot_cost(a, x, scenario.disutility, controller.mode)
        trace.append(TraceRecord.from_slot(t, x, a, e, e_after, cost))
        e = e_after

    report = monitor_invariants(trace, params, cfg)
    drift, passed = drift_check(trace, cfg, params)
    if strict and report:
        first = report[0]
        raise TheoremViolationError(first.slot, first.constraint, first.detail)
    if strict and not passed:
        slot = trace[int(drift.failed_slots[0])].t
        raise TheoremViolationError(slot, 'drift',
                                    f'margin {drift.min_margin:.6g} below -{drift.tolerance:g}')
    for item in report:
        violations[item.constraint] = violations.get(item.constraint, 0) + 1
    if not passed:
        violations['drift'] = len(drift.failed_slots)

    metrics = summarize(trace, controller.name, cfg.v, seed, scenario.name, cfg.capacity,
                        violations=violations, drift=drift)
    logger.info('%s V=%g seed=%d: average cost %.6g cents/slot, max E %.6g of %.6g kWh',
                controller.name, cfg.v, seed, metrics.average_cost, metrics.max_energy, cfg.capacity)
    return metrics, trace


@dataclass(frozen=True)
class RunSpec:
    controller: str
    v: float
    seed: int


def _run_spec(args):
    scenario, spec, T, e0, strict = args
    cfg = ControllerConfig.from_v(spec.v, scenario.params)
    controller = make_controller(spec.controller, cfg, scenario.params, scenario.disutility,
                                 load_serving=scenario.load_serving)
    metrics, _ = run_simulation(controller, scenario, scenario.params, cfg, T, spec.seed,
                                e0=e0, strict=strict)
    return metrics


def sweep(scenario, controllers, v_list, seeds, T, e0=0., threads=None, strict=True):
    '''
    Runs every controller at every V with every seed. Runs with the same
    seed see the same exogenous sequence (for i.i.d. and Markov scenarios).

    Returns:
        list of Metrics sorted by (controller, V, seed)
    '''
    specs = [RunSpec(name, float(v), int(seed)) for name in controllers for v in v_list for seed in seeds]
    workers = min(threads or thread_cap(), len(specs))
    logger.info('Sweeping %d runs on %s with %d workers', len(specs), scenario.name, workers)
    jobs = [(scenario, spec, T, e0, strict) for spec in specs]
    if workers <= 1:
        results = [_run_spec(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_spec, jobs))
    return sorted(results, key=lambda m: (m.controller, m.v, m.seed))


@dataclass
class GapReport:
    '''
    Average cost of the drift-plus-penalty controller against the RVI gain
    of the discretized problem, with the accepted band
    [gain - slack, gain + B epsilon + slack].
    '''
    v: float
    gain: float
    average_cost: float
    standard_error: float
    b_epsilon: float
    slack: float
    iterations: int
    states: int

    @property
    def lower(self):
        return self.gain - self.slack

    @property
    def upper(self):
        return self.gain + self.b_epsilon + self.slack

    @property
    def passed(self):
        return self.lower <= self.average_cost <= self.upper

    def to_dict(self):
        return {'v': self.v, 'gain': self.gain, 'average_cost': self.average_cost,
                'standard_error': self.standard_error, 'b_epsilon': self.b_epsilon, 'slack': self.slack,
                'lower': self.lower, 'upper': self.upper, 'passed': self.passed,
                'iterations': self.iterations, 'states': self.states}


def oracle_gap(scenario, v, delta_e, delta_a=0.5, T=10 ** 5, seed=0, capacity=None,
               tol=1e-8, max_iter=200000, alpha=0.5):
    '''
    Discretizes the scenario, computes the RVI gain and rolls out the
    drift-plus-penalty controller (DR-ESM, or ESM for load-serving scenarios).
    '''
    params = scenario.params
    cfg = ControllerConfig.from_v(v, params)
    mdp = discretize(params, scenario, delta_e, delta_a, capacity=capacity, cfg=cfg)
    result = relative_value_iteration(mdp, tol=tol, max_iter=max_iter, alpha=alpha)
    name = 'esm' if scenario.load_serving else 'dresm'
    controller = make_controller(name, cfg, params, scenario.disutility, load_serving=scenario.load_serving)
    average, costs = rollout_policy(controller, scenario, params, T, seed, cfg=cfg, return_costs=True)
    se = batch_means_se(costs)
    report = GapReport(v=cfg.v, gain=result.gain, average_cost=average, standard_error=se,
                       b_epsilon=params.b_const * cfg.epsilon, slack=0.05 * abs(result.gain) + 3. * se,
                       iterations=result.iterations, states=mdp.n_states)
    logger.info('Oracle gap at V=%g: gain %.6g, %s %.6g +- %.3g, band [%.6g, %.6g]',
                cfg.v, report.gain, name, average, se, report.lower, report.upper)
    return report


def lp_selftest(n, seed, step=0.01, tol=1e-9):
    '''
    Solves n random storage LPs and checks each against the grid oracle,
    the optimality certificate and the feasibility residual.

    Returns:
        pd.DataFrame with one row per instance and a passed column
    '''
    rng = make_rng(seed)
    rows = []
    for i in range(n):
        lp = random_storage_lp(rng, params_for_selftest(rng))
        sol = solve_storage_lp(lp)
        brute = brute_force_lp(lp, step)
        slack = tol * max(1., abs(brute.objective))
        residual = lp_residuals(sol, lp)
        certified = verify_optimality(sol, lp)
        rows.append({
            'instance': i, 'objective': sol.objective, 'oracle': brute.objective, 'residual': residual,
            'certified': certified,
            'passed': sol.objective >= brute.objective - slack and certified and residual <= tol,
        })
    return pd.DataFrame(rows, columns=['instance', 'objective', 'oracle', 'residual', 'certified', 'passed'])


def params_for_selftest(rng):
    '''Random valid SystemParams; every instance gets fresh rate limits.'''
    eta_e = float(rng.uniform(1., 1.5))
    eta_i = float(rng.uniform(0.6, 1.))
    l_max = float(np.round(rng.uniform(1., 15.), 2))
    c_grid = float(np.ceil((eta_e * l_max / eta_i + rng.uniform(0., 10.)) * 100.) / 100.)
    return SystemParams(eta_e=eta_e, eta_i=eta_i, c_grid=c_grid,
                        c_char=float(np.round(rng.uniform(1., 15.), 2)),
                        c_dis=float(np.round(rng.uniform(1., 15.), 2)),
                        l_max=l_max, r_max=float(np.round(rng.uniform(0., 12.), 2)),
                        p_max=20., q_max=20.)
