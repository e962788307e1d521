"""
Per-slot decision rules: ESM (load serving), DR-ESM (demand response) and
the storage-free Greedy baseline, with the weight and sizing rules they use.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from storage_dr.exceptions import ConfigurationError, ResourceBudgetError
from storage_dr.modeling.lp_kernel import StorageLP, kernel_for, solve_storage_lp
from storage_dr.modeling.system import (
    ControlAction,
    CostMode,
    positive_part,
    residual_load,
)

logger = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.) - 1.) / 2.


def compute_theta(params, epsilon):
    '''
    Energy offset of the Lyapunov function,
    max(p_max, q_max) / (epsilon eta_i) + eta_e min(L_max, c_dis).
    '''
    if not epsilon > 0:
        raise ConfigurationError(f'epsilon must be positive, got {epsilon}')
    return (max(params.p_max, params.q_max) / (epsilon * params.eta_i)
            + params.eta_e * min(params.l_max, params.c_dis))


@dataclass(frozen=True)
class ControllerConfig:
    '''
    Control knob V = 1/epsilon and the storage sizing it implies.

    Args:
        v(float): cost/storage trade-off parameter
        epsilon(float): 1/v
        theta(float): energy offset in kWh
        capacity(float): provisioned storage theta + eta_i c_char in kWh
    '''
    v: float
    epsilon: float
    theta: float
    capacity: float

    @classmethod
    def from_v(cls, v, params):
        if not v > 0:
            raise ConfigurationError(f'V must be positive, got {v}')
        epsilon = 1. / v
        theta = compute_theta(params, epsilon)
        capacity = theta + params.eta_i * params.c_char
        if params.c_dis > params.l_max:
            logger.warning('c_dis=%g > L_max=%g: the energy-availability guarantee assumes '
                           'c_dis <= L_max', params.c_dis, params.l_max)
        logger.debug('V=%g: theta=%.6g kWh, capacity=%.6g kWh', v, theta, capacity)
        return cls(v=float(v), epsilon=epsilon, theta=theta, capacity=capacity)

    def empty_threshold(self, params):
        '''Below eta_e min(L_max, c_dis) the energy level never decreases.'''
        return params.eta_e * min(params.l_max, params.c_dis)


def storage_size_table(params, v_list):
    '''
    Provisioned storage per V.

    Returns:
        pd.DataFrame with columns v, epsilon, theta, capacity
    '''
    rows = []
    for v in v_list:
        cfg = ControllerConfig.from_v(v, params)
        rows.append({'v': cfg.v, 'epsilon': cfg.epsilon, 'theta': cfg.theta, 'capacity': cfg.capacity})
    return pd.DataFrame(rows, columns=['v', 'epsilon', 'theta', 'capacity'])


@dataclass(frozen=True)
class WeightSet:
    w_h: float
    w_c: float
    w_r: float
    w_s: Optional[float] = None
    w_l: Optional[float] = None
    w_d: Optional[float] = None


def esm_weights(e, x, cfg, params):
    backlog = e - cfg.theta
    return WeightSet(
        w_h=params.eta_e * backlog + x.q / cfg.epsilon,
        w_s=params.eta_e * backlog + x.p / cfg.epsilon,
        w_c=params.eta_i * backlog + x.p / cfg.epsilon,
        w_r=params.eta_i * backlog,
    )


def esm_decide(e, x, cfg, params):
    '''
    ESM action for a slot whose consumption x.exo_load is given.
    '''
    if x.exo_load is None:
        raise ConfigurationError('ESM needs a sample with a given load (exo_load)')
    w = esm_weights(e, x, cfg, params)
    lp = StorageLP.from_residual(w.w_h, w.w_s, w.w_c, w.w_r, residual_load(x.exo_load, x.r), params)
    return solve_storage_lp(lp).to_action(x.exo_load)


def dresm_weights(e, x, cfg, params):
    backlog = e - cfg.theta
    return WeightSet(
        w_h=params.eta_e * backlog + x.q / cfg.epsilon,
        w_l=params.eta_e * backlog + x.p / cfg.epsilon,
        w_c=params.eta_i * backlog + x.p / cfg.epsilon,
        w_r=params.eta_i * backlog,
        w_d=params.eta_e * backlog,
    )


def dresm_objective(l_tilde, action, x, weights, cfg, d):
    '''
    V D(l, S) - W_D [l - r]+ - h_s W_h + d_l W_l + d_c W_c + r_c W_r
    '''
    state = d.lookup(x.s)
    return (cfg.v * state.beta * (state.target - l_tilde) ** 2
            - weights.w_d * positive_part(residual_load(l_tilde, x.r))
            - action.h_s * weights.w_h + action.d_l * weights.w_l
            + action.d_c * weights.w_c + action.r_c * weights.w_r)


def _storage_lp_at(l_tilde, x, weights, params):
    # d_l W_l - W_D [L]+ = V p [L]+ - d_s W_l, so the inner program is the
    # storage LP with W_l in the role of W_s
    return StorageLP.from_residual(weights.w_h, weights.w_l, weights.w_c, weights.w_r,
                                   residual_load(l_tilde, x.r), params)


def _branches(x, params):
    '''(lower, upper, z0, z1) for l <= r and l >= r, z(l) = z0 + l z1.'''
    r = x.r
    branches = [(0., min(r, params.l_max), np.array([0., r, 1.]), np.array([0., -1., 0.]))]
    if r <= params.l_max:
        branches.append((r, params.l_max, np.array([-r, 0., 1.]), np.array([1., 0., 0.])))
    return branches


def dresm_decide(e, x, cfg, params, d):
    '''
    Exact minimizer of the DR-ESM per-slot program.

    On each branch of the residual load the inner LP is evaluated basis by
    basis as an affine function of l_tilde; together with the quadratic
    disutility every basis gives a one-dimensional convex problem on its
    feasibility interval, solved in closed form. The best over bases and
    branches is the optimum; ties go to the smallest l_tilde.
    '''
    weights = dresm_weights(e, x, cfg, params)
    state = d.lookup(x.s)
    kernel = kernel_for(params)
    c = np.array([0., -weights.w_c, weights.w_l, weights.w_h, -weights.w_r])
    price = x.p / cfg.epsilon
    curvature = cfg.v * state.beta

    best_value, best_l = math.inf, None
    for lower, upper, z0, z1 in _branches(x, params):
        table = kernel.branch_table(z0, z1)
        lo = np.maximum(table.lower, lower)
        hi = np.minimum(table.upper, upper)
        valid = lo <= hi + 1e-12
        if not valid.any():
            continue
        lo, hi = lo[valid], np.maximum(hi[valid], lo[valid])
        alpha = table.offset[valid] @ c
        beta = table.slope[valid] @ c
        # V p [L]+ is V p (l - r) on the upper branch and zero below
        load_slope, load_offset = z1[0] * price, z0[0] * price
        a = load_slope - beta
        b = load_offset - alpha
        if curvature > 0:
            l_star = np.clip(state.target - a / (2. * curvature), lo, hi)
        else:
            l_star = np.where(a >= 0, lo, hi)
        values = curvature * (state.target - l_star) ** 2 + a * l_star + b
        i = int(np.argmin(values))
        tol = 1e-9 * max(1., abs(values[i]))
        ties = np.flatnonzero(values <= values[i] + tol)
        j = ties[np.argmin(l_star[ties])]
        value, l_tilde = float(values[j]), float(l_star[j])
        if value < best_value - 1e-9 * max(1., abs(value)) or (
                value <= best_value + 1e-9 * max(1., abs(value)) and l_tilde < best_l):
            best_value, best_l = value, l_tilde

    l_tilde = min(max(best_l, 0.), params.l_max)
    return solve_storage_lp(_storage_lp_at(l_tilde, x, weights, params)).to_action(l_tilde)


def dresm_lipschitz(e, x, cfg, params, d):
    '''
    Lipschitz constant of the DR-ESM objective in l_tilde (inner LP solved).
    '''
    weights = dresm_weights(e, x, cfg, params)
    state = d.lookup(x.s)
    spread = max(state.target, params.l_max - state.target)
    return (2. * cfg.v * state.beta * spread + x.p / cfg.epsilon
            + abs(weights.w_h) + abs(weights.w_l) + abs(weights.w_c) + abs(weights.w_r))


def _golden_section(func, lower, upper, tol=1e-11, max_iter=200):
    a, b = lower, upper
    c1, c2 = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    f1, f2 = func(c1), func(c2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 <= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - GOLDEN * (b - a)
            f1 = func(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + GOLDEN * (b - a)
            f2 = func(c2)
    return a, b


def dresm_oracle(e, x, cfg, params, d, step, refine=True, max_points=10 ** 6):
    '''
    Grid oracle for DR-ESM: l_tilde is scanned on [0, L_max] with the given
    step and the inner program solved exactly at each point.

    With refine, the best grid point of each residual-load branch is
    followed by a golden-section search inside its neighbouring cells; the
    objective is convex on each branch so this converges to the optimum.

    Returns:
        ControlAction of the best point found (ties to the smallest l_tilde)
    '''
    if not step > 0:
        raise ValueError(f'step must be positive, got {step}')
    if params.l_max / step + 1 > max_points:
        raise ResourceBudgetError(f'grid with step {step} exceeds {max_points} points')
    weights = dresm_weights(e, x, cfg, params)
    cache = {}

    def evaluate(l_tilde):
        if l_tilde not in cache:
            action = solve_storage_lp(_storage_lp_at(l_tilde, x, weights, params)).to_action(l_tilde)
            cache[l_tilde] = (dresm_objective(l_tilde, action, x, weights, cfg, d), action)
        return cache[l_tilde]

    count = int(math.floor(params.l_max / step + 1e-9))
    grid = [min(k * step, params.l_max) for k in range(count + 1)]
    if grid[-1] < params.l_max:
        grid.append(params.l_max)
    for point in grid:
        evaluate(point)

    if refine:
        for lower, upper, _, _ in _branches(x, params):
            inside = [p for p in grid if lower <= p <= upper]
            if inside:
                centre = min(inside, key=lambda p: (evaluate(p)[0], p))
                a, b = max(lower, centre - step), min(upper, centre + step)
            else:
                a, b = lower, upper
            a, b = _golden_section(lambda p: evaluate(p)[0], a, b)
            evaluate(a)
            evaluate(b)

    best = min(cache, key=lambda p: (cache[p][0], p))
    return cache[best][1]


def greedy_decide(x, d, params):
    '''
    Storage-free myopic rule: minimize D(l, S) + p (l - r)+ over
    [0, L_max]; with a given load the load is served from the grid.
    '''
    if x.exo_load is not None:
        l_tilde = x.exo_load
        return ControlAction(l_tilde=l_tilde, d_l=positive_part(residual_load(l_tilde, x.r)))

    state = d.lookup(x.s)
    candidates = []
    below = min(x.r, params.l_max)
    if state.beta > 0:
        candidates.append(min(max(state.target, 0.), below))
    else:
        candidates.append(0.)
    if x.r <= params.l_max:
        if state.beta > 0:
            candidates.append(min(max(state.target - x.p / (2. * state.beta), x.r), params.l_max))
        else:
            candidates.append(x.r if x.p > 0 else params.l_max)

    def cost(l_tilde):
        return state.beta * (state.target - l_tilde) ** 2 + x.p * positive_part(l_tilde - x.r)

    l_tilde = min(candidates, key=lambda l: (cost(l), l))
    return ControlAction(l_tilde=l_tilde, d_l=positive_part(residual_load(l_tilde, x.r)))


class EsmController:
    name = 'esm'
    mode = CostMode.LOAD_SERVING

    def __init__(self, cfg, params, disutility=None):
        self.cfg = cfg
        self.params = params
        self.disutility = disutility

    def decide(self, e, x):
        return esm_decide(e, x, self.cfg, self.params)


class DrEsmController:
    name = 'dresm'
    mode = CostMode.DEMAND_RESPONSE

    def __init__(self, cfg, params, disutility):
        self.cfg = cfg
        self.params = params
        self.disutility = disutility

    def decide(self, e, x):
        return dresm_decide(e, x, self.cfg, self.params, self.disutility)


class GreedyController:
    name = 'greedy'

    def __init__(self, cfg, params, disutility, load_serving=False):
        self.cfg = cfg
        self.params = params
        self.disutility = disutility
        self.mode = CostMode.LOAD_SERVING if load_serving else CostMode.DEMAND_RESPONSE

    def decide(self, e, x):
        return greedy_decide(x, self.disutility, self.params)


CONTROLLERS = ('esm', 'dresm', 'greedy')


def make_controller(name, cfg, params, disutility, load_serving=False):
    '''
    Builds a controller by name; esm requires a load-serving scenario and
    dresm a demand-response one.
    '''
    if name == 'esm':
        if not load_serving:
            raise ConfigurationError('esm needs a load-serving scenario (samples with exo_load)')
        return EsmController(cfg, params, disutility)
    if name == 'dresm':
        if load_serving:
            raise ConfigurationError('dresm needs a demand-response scenario (no exo_load)')
        return DrEsmController(cfg, params, disutility)
    if name == 'greedy':
        return GreedyController(cfg, params, disutility, load_serving=load_serving)
    raise ConfigurationError(f'unknown controller {name!r}; choose from {", ".join(CONTROLLERS)}')
