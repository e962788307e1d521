"""
Desk-scale optimal average cost: the storage problem on an energy grid,
solved by relative value iteration, and rollouts of arbitrary policies.
"""
import logging
from dataclasses import dataclass

import numpy as np

from storage_dr.exceptions import (
    ConfigurationError,
    ConvergenceError,
    InfeasibleActionError,
    ResourceBudgetError,
)
from storage_dr.modeling.system import (
    ControlAction,
    CostMode,
    TOL_INEQ,
    apply_storage_dynamics,
    check_feasibility,
    slot_cost,
)

logger = logging.getLogger(__name__)

MAX_STATES = 20000
MAX_ENTRIES = 5 * 10 ** 7
MAX_CANDIDATES = 2 * 10 ** 6


def span(x):
    return float(np.max(x) - np.min(x))


def energy_levels(capacity, delta_e):
    '''Levels 0, delta_e, 2 delta_e, ... up to capacity, capacity included.'''
    count = int(np.floor(capacity / delta_e + 1e-9))
    levels = delta_e * np.arange(count + 1)
    if levels[-1] < capacity - 1e-9:
        levels = np.append(levels, capacity)
    return levels


def snap(levels, e):
    '''Index of the grid level nearest to e (the lower one on ties).'''
    i = int(np.searchsorted(levels, e))
    if i == 0:
        return 0
    if i >= len(levels):
        return len(levels) - 1
    return i if levels[i] - e < e - levels[i - 1] else i - 1


def _rate_grid(upper, step):
    if upper <= 0:
        return np.zeros(1)
    return energy_levels(upper, step)


@dataclass
class DiscretizedMDP:
    '''
    Average-cost MDP over states (energy level k, outcome m), indexed
    k * n_outcomes + m.

    Args:
        levels(np.ndarray): energy grid in kWh
        outcomes(tuple): ExogenousSample per outcome
        law(np.ndarray): outcome transition matrix (n_outcomes x n_outcomes)
        actions(list): per outcome, the kept ControlAction of every action group
        costs(np.ndarray): states x actions, inf where the action is unavailable
        transitions(np.ndarray): actions x states x states
        mode(CostMode): cost accounting
    '''
    levels: np.ndarray
    outcomes: tuple
    law: np.ndarray
    actions: list
    costs: np.ndarray
    transitions: np.ndarray
    mode: CostMode = CostMode.DEMAND_RESPONSE

    @property
    def n_states(self):
        return self.costs.shape[0]

    @property
    def n_actions(self):
        return self.costs.shape[1]

    def state_index(self, k, m):
        return k * len(self.outcomes) + m

    @classmethod
    def from_arrays(cls, costs, transitions):
        '''Generic finite MDP without the storage interpretation.'''
        costs = np.asarray(costs, dtype=float)
        transitions = np.asarray(transitions, dtype=float)
        n_states = costs.shape[0]
        return cls(levels=np.zeros(n_states), outcomes=(None,), law=np.ones((1, 1)),
                   actions=[], costs=costs, transitions=transitions)


def _action_groups(x, params, delta_a, d, mode, max_candidates):
    '''
    Enumerates grid actions for one sample and keeps, for every
    (discharge, charge) pair, the cheapest feasible one.
    '''
    if x.exo_load is not None:
        loads = np.array([x.exo_load])
    else:
        loads = _rate_grid(params.l_max, delta_a)
    charge_grid = _rate_grid(params.c_char, delta_a)
    discharge_grid = _rate_grid(params.c_dis, delta_a)
    size = len(loads) * len(charge_grid) ** 2 * len(discharge_grid) ** 2
    if size > max_candidates:
        raise ResourceBudgetError(
            f'{size} candidate actions per outcome exceed the budget of {max_candidates}')

    l_tilde, d_s, h_s, d_c, r_c = (a.ravel() for a in np.meshgrid(
        loads, discharge_grid, discharge_grid, charge_grid, charge_grid, indexing='ij'))
    l_plus = np.maximum(l_tilde - x.r, 0.)
    l_minus = np.maximum(x.r - l_tilde, 0.)
    d_l = l_plus - d_s
    ok = ((d_l >= -TOL_INEQ) & (d_l + d_c <= params.c_grid + TOL_INEQ)
          & (d_c + r_c <= params.c_char + TOL_INEQ) & (d_s + h_s <= params.c_dis + TOL_INEQ)
          & (r_c <= l_minus + TOL_INEQ))
    d_l = np.maximum(d_l, 0.)
    cost = x.p * (d_l + d_c) - x.q * h_s
    if CostMode(mode) is CostMode.DEMAND_RESPONSE:
        state = d.lookup(x.s)
        cost = cost + state.beta * (state.target - l_tilde) ** 2
    index = np.flatnonzero(ok)
    discharge = np.round(d_s[index] + h_s[index], 9)
    charge = np.round(d_c[index] + r_c[index], 9)
    # sort by group then cost; first row of every group is its cheapest action
    order = np.lexsort((cost[index], charge, discharge))
    index, discharge, charge = index[order], discharge[order], charge[order]
    first = np.ones(len(index), dtype=bool)
    first[1:] = (discharge[1:] != discharge[:-1]) | (charge[1:] != charge[:-1])
    kept = index[first]
    actions = [ControlAction(l_tilde=float(l_tilde[i]), d_l=float(d_l[i]), d_c=float(d_c[i]),
                             d_s=float(d_s[i]), h_s=float(h_s[i]), r_c=float(r_c[i])) for i in kept]
    return actions, cost[kept]


def discretize(params, scenario, delta_e, delta_a, capacity=None, cfg=None,
               max_states=MAX_STATES, max_candidates=MAX_CANDIDATES):
    '''
    Builds the average-cost MDP of the storage problem on an energy grid.

    Args:
        params(SystemParams): limits and efficiencies
        scenario(IIDScenario or MarkovScenario): finite exogenous process
        delta_e(float): energy grid step in kWh
        delta_a(float): action grid step in kW
        capacity(float): storage size; defaults to cfg.capacity

    Returns:
        DiscretizedMDP with (capacity/delta_e + 1) x outcomes states
    '''
    if not (delta_e > 0 and delta_a > 0):
        raise ConfigurationError('delta_e and delta_a must be positive')
    if capacity is None:
        if cfg is None:
            raise ConfigurationError('discretize needs a capacity or a controller configuration')
        capacity = cfg.capacity
    if not hasattr(scenario, 'transition_matrix'):
        raise ConfigurationError(f'scenario {scenario.name!r} has no finite outcome law')

    levels = energy_levels(capacity, delta_e)
    outcomes = tuple(scenario.outcomes)
    law = np.asarray(scenario.transition_matrix(), dtype=float)
    n_levels, n_outcomes = len(levels), len(outcomes)
    n_states = n_levels * n_outcomes
    if n_states > max_states:
        raise ResourceBudgetError(f'{n_states} states exceed the budget of {max_states}')

    mode = CostMode.LOAD_SERVING if scenario.load_serving else CostMode.DEMAND_RESPONSE
    groups = [_action_groups(x, params, delta_a, scenario.disutility, mode, max_candidates) for x in outcomes]
    n_actions = max(len(actions) for actions, _ in groups)
    if n_actions * n_states * n_states > MAX_ENTRIES:
        raise ResourceBudgetError(f'transition table of {n_actions}x{n_states}x{n_states} exceeds the budget')

    costs = np.full((n_states, n_actions), np.inf)
    transitions = np.zeros((n_actions, n_states, n_states))
    columns = np.arange(n_outcomes)
    for m, (actions, group_costs) in enumerate(groups):
        discharge = np.array([a.discharge for a in actions])
        charge = np.array([a.charge for a in actions])
        for k, e in enumerate(levels):
            after = e - params.eta_e * discharge + params.eta_i * charge
            available = (params.eta_e * discharge <= e + TOL_INEQ) & (after <= capacity + TOL_INEQ)
            s = k * n_outcomes + m
            for a in np.flatnonzero(available):
                costs[s, a] = group_costs[a]
                transitions[a, s, snap(levels, after[a]) * n_outcomes + columns] = law[m]
    if np.any(np.all(np.isinf(costs), axis=1)):
        raise ConfigurationError('some grid state has no feasible action')

    logger.debug('Discretized %s: %d levels x %d outcomes, %d action groups',
                 scenario.name, n_levels, n_outcomes, n_actions)
    return DiscretizedMDP(levels, outcomes, law, [a for a, _ in groups], costs, transitions, mode)


@dataclass
class RviResult:
    gain: float
    bias: np.ndarray
    iterations: int
    span: float
    policy: np.ndarray


def relative_value_iteration(mdp, tol=1e-8, max_iter=100000, alpha=1.0, ref_state=0):
    '''
    Synchronous relative value iteration for an average-cost MDP.

    With alpha < 1 the update h <- (1 - alpha) h + alpha T h is the
    aperiodicity transform, which converges on periodic optimal chains.
    The gain is the midpoint of min and max of T h - h at termination.

    Raises:
        ConvergenceError: if span(T h - h) > tol after max_iter sweeps
    '''
    if not 0 < alpha <= 1:
        raise ConfigurationError(f'alpha must be in (0, 1], got {alpha}')
    h = np.zeros(mdp.n_states)
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        q = mdp.costs + np.einsum('ast,t->sa', mdp.transitions, h)
        th = q.min(axis=1)
        delta = th - h
        residual = span(delta)
        if residual <= tol:
            gain = 0.5 * (float(delta.max()) + float(delta.min()))
            logger.info('RVI converged after %d iterations: gain %.6g, span %.3g', iteration, gain, residual)
            return RviResult(gain=gain, bias=h - h[ref_state], iterations=iteration,
                             span=residual, policy=q.argmin(axis=1))
        h = h + alpha * delta
        h = h - h[ref_state]
    raise ConvergenceError(f'RVI did not converge in {max_iter} iterations (span {residual:.3g})')


class RviPolicy:
    '''
    Stationary policy of a converged RVI run: the energy is snapped to the
    grid and the sample looked up among the MDP outcomes.
    '''
    name = 'rvi'

    def __init__(self, mdp, result):
        self.mdp = mdp
        self.result = result
        self.mode = mdp.mode
        self._outcome_index = {}
        for m, x in enumerate(mdp.outcomes):
            self._outcome_index.setdefault(x, m)

    def decide(self, e, x):
        try:
            m = self._outcome_index[x]
        except KeyError:
            raise ConfigurationError(f'sample {x} is not an outcome of the discretized MDP') from None
        k = snap(self.mdp.levels, e)
        a = int(self.result.policy[self.mdp.state_index(k, m)])
        return self.mdp.actions[m][a]


def rollout_policy(policy, scenario, params, T, seed, energy_grid=None, mode=None, e0=0.,
                   cfg=None, run_index=0, return_costs=False):
    '''
    Average cost of a policy along a simulated trajectory.

    Args:
        policy: object with decide(e, x) -> ControlAction
        scenario: scenario with a stream(seed, run_index, cfg) method
        T(int): number of slots
        energy_grid(np.ndarray): if given, E is snapped to it after every slot

    Returns:
        average cost in cents per slot (and the per-slot costs with return_costs)

    Raises:
        InfeasibleActionError: with the slot index of the first infeasible action
    '''
    if T < 1:
        raise ConfigurationError(f'T must be >= 1, got {T}')
    if mode is None:
        mode = CostMode.LOAD_SERVING if scenario.load_serving else CostMode.DEMAND_RESPONSE
    stream = scenario.stream(seed, run_index, cfg)
    costs = np.empty(T)
    e = float(e0)
    for t in range(T):
        _, x = stream.next(e)
        a = policy.decide(e, x)
        violations = check_feasibility(a, x, e, params)
        if violations:
            raise InfeasibleActionError(t, violations)
        costs[t] = slot_cost(a, x, scenario.disutility, mode)
        e = apply_storage_dynamics(e, a, params)
        if energy_grid is not None:
            e = float(energy_grid[snap(energy_grid, e)])
    average = float(costs.mean())
    if return_costs:
        return average, costs
    return average
