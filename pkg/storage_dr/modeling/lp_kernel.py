"""
Exact solver for the per-slot storage linear program

    max  h_s W_h + d_s W_s - d_c W_c - r_c W_r
    s.t. d_l + d_s = [L]+,  d_l + d_c <= c_grid,  d_c + r_c <= c_char,
         h_s + d_s <= c_dis,  r_c <= [-L]+,  all variables >= 0

by enumeration of the bases of its 5-variable polytope, plus a grid oracle
and a vertex optimality certificate used to verify it.
"""
import functools
import itertools
import logging
import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from storage_dr.exceptions import (
    ConfigurationError,
    ResourceBudgetError,
    StructuralInfeasibilityError,
)
from storage_dr.modeling.system import TOL_EQ, ControlAction, SystemParams

logger = logging.getLogger(__name__)

# kernel variable order
D_L, D_C, D_S, H_S, R_C = range(5)
VARIABLES = ('d_l', 'd_c', 'd_s', 'h_s', 'r_c')
# among equal objectives, prefer small purchases and sales in this order
TIE_BREAK = (D_C, H_S, D_S, R_C, D_L)

FEAS_TOL = 1e-9
ZERO_SNAP = 1e-12

# inequality rows G x <= h(z); z = (l_plus, l_minus, 1)
_G = np.vstack([
    [1., 1., 0., 0., 0.],   # grid limit
    [0., 1., 0., 0., 1.],   # charge rate
    [0., 0., 1., 1., 0.],   # discharge rate
    [0., 0., 0., 0., 1.],   # surplus renewable
    -np.eye(5),
])
_A_EQ = np.array([1., 0., 1., 0., 0.])
_EQ_RHS = np.array([1., 0., 0.])
_N_INEQ = _G.shape[0]


def _enumerate_bases():
    combos, inverses = [], []
    for combo in itertools.combinations(range(_N_INEQ), 4):
        matrix = np.vstack([_A_EQ, _G[list(combo)]])
        if abs(np.linalg.det(matrix)) > 1e-9:
            combos.append(combo)
            inverses.append(np.linalg.inv(matrix))
    return np.array(combos, dtype=int), np.array(inverses)


# the constraint matrix never changes, only the right-hand side does
_BASES, _BASIS_INVERSES = _enumerate_bases()

BranchTable = namedtuple('BranchTable', ['offset', 'slope', 'lower', 'upper'])


@dataclass(frozen=True)
class StorageLP:
    '''
    One instance of the storage program.

    Args:
        w_h, w_s, w_c, w_r(float): signed objective weights
        l_plus(float): [L]+, residual load to serve
        l_minus(float): [-L]+, surplus renewable available for charging
        params(SystemParams): rate limits
    '''
    w_h: float
    w_s: float
    w_c: float
    w_r: float
    l_plus: float
    l_minus: float
    params: SystemParams

    def __post_init__(self):
        problems = []
        if self.l_plus < -TOL_EQ or self.l_minus < -TOL_EQ:
            problems.append('l_plus and l_minus must be nonnegative')
        if self.l_plus * self.l_minus > TOL_EQ:
            problems.append('l_plus and l_minus cannot both be positive')
        if self.l_plus > self.params.l_max + TOL_EQ:
            problems.append(f'l_plus={self.l_plus} exceeds L_max={self.params.l_max}')
        if self.l_minus > self.params.r_max + TOL_EQ:
            problems.append(f'l_minus={self.l_minus} exceeds r_max={self.params.r_max}')
        if problems:
            raise ConfigurationError('invalid storage LP: ' + '; '.join(problems))

    @classmethod
    def from_residual(cls, w_h, w_s, w_c, w_r, load, params):
        return cls(w_h, w_s, w_c, w_r, max(load, 0.), max(-load, 0.), params)

    @property
    def objective_vector(self):
        return np.array([0., -self.w_c, self.w_s, self.w_h, -self.w_r])

    @property
    def max_weight(self):
        return max(abs(self.w_h), abs(self.w_s), abs(self.w_c), abs(self.w_r))


@dataclass(frozen=True)
class LPSolution:
    d_l: float
    d_c: float
    d_s: float
    h_s: float
    r_c: float
    objective: float

    @classmethod
    def from_array(cls, x, objective):
        return cls(*(float(v) for v in x), objective=float(objective))

    def as_array(self):
        return np.array([self.d_l, self.d_c, self.d_s, self.h_s, self.r_c])

    def to_action(self, l_tilde):
        return ControlAction(l_tilde=l_tilde, d_l=self.d_l, d_c=self.d_c,
                             d_s=self.d_s, h_s=self.h_s, r_c=self.r_c)


class StorageLPKernel:
    '''
    Vertex tables of the storage polytope for one set of SystemParams.

    Every basis maps z = (l_plus, l_minus, 1) affinely to its vertex, so
    solving an instance is one matrix product over all bases.
    '''

    def __init__(self, params):
        self.params = params
        rhs = np.zeros((_N_INEQ, 3))
        rhs[0, 2] = params.c_grid
        rhs[1, 2] = params.c_char
        rhs[2, 2] = params.c_dis
        rhs[3, 1] = 1.
        self.rhs = rhs
        basis_rhs = np.concatenate(
            [np.broadcast_to(_EQ_RHS, (len(_BASES), 1, 3)), rhs[_BASES]], axis=1)
        self.vertex_maps = _BASIS_INVERSES @ basis_rhs
        logger.debug('storage LP kernel with %d bases', len(_BASES))

    def vertices(self, z):
        x = self.vertex_maps @ z
        x[np.abs(x) < ZERO_SNAP] = 0.
        return x

    def feasible(self, x, z, tol=FEAS_TOL):
        slack = (self.rhs @ z)[None, :] - x @ _G.T
        return np.all(slack >= -tol, axis=1)

    def _clean(self, x, l_plus):
        # coordinates within tolerance of their lower bound are exactly zero
        x = np.where((x < 0.) & (x >= -FEAS_TOL), 0., x)
        x[:, D_L] = np.maximum(l_plus - x[:, D_S], 0.)
        return x

    def solve(self, lp):
        if lp.l_plus > self.params.c_grid + TOL_EQ:
            raise StructuralInfeasibilityError(
                f'[L]+={lp.l_plus} exceeds c_grid={self.params.c_grid}')
        z = np.array([lp.l_plus, lp.l_minus, 1.])
        x = self.vertices(z)
        mask = self.feasible(x, z)
        if not mask.any():
            raise StructuralInfeasibilityError(f'no feasible vertex for {lp}')
        x = self._clean(x, lp.l_plus)
        values = x @ lp.objective_vector
        best = values[mask].max()
        mask &= values >= best - FEAS_TOL * max(1., abs(best))
        for column in TIE_BREAK:
            smallest = x[mask, column].min()
            mask &= x[:, column] <= smallest + FEAS_TOL
        index = int(np.flatnonzero(mask)[0])
        return LPSolution.from_array(x[index], values[index])

    def branch_table(self, z0, z1):
        '''
        Vertices along z(l) = z0 + l z1 for every basis.

        Returns:
            BranchTable with vertex offset and slope arrays (bases x 5) and,
            per basis, the interval [lower, upper] of l on which the basis
            is primal feasible, without tolerance (empty when lower > upper)
        '''
        offset = self.vertex_maps @ z0
        slope = self.vertex_maps @ z1
        coef = slope @ _G.T - (self.rhs @ z1)[None, :]
        bound = (self.rhs @ z0)[None, :] - offset @ _G.T
        with np.errstate(divide='ignore', invalid='ignore'):
            ratio = bound / coef
        pos = coef > ZERO_SNAP
        neg = coef < -ZERO_SNAP
        upper = np.min(np.where(pos, ratio, np.inf), axis=1)
        lower = np.max(np.where(neg, ratio, -np.inf), axis=1)
        flat = ~(pos | neg)
        never = np.any(flat & (bound < -FEAS_TOL), axis=1)
        lower[never] = np.inf
        return BranchTable(offset, slope, lower, upper)


@functools.lru_cache(maxsize=64)
def kernel_for(params):
    return StorageLPKernel(params)


def solve_storage_lp(lp):
    '''
    Global maximizer of the storage program; among optimal vertices the one
    with lexicographically smallest (d_c, h_s, d_s, r_c, d_l).

    Raises:
        StructuralInfeasibilityError: if [L]+ exceeds c_grid
    '''
    return kernel_for(lp.params).solve(lp)


def _grid(lower, upper, step):
    count = int(math.floor((upper - lower) / step + 1e-9))
    points = lower + step * np.arange(count + 1)
    if points[-1] < upper - 1e-12:
        points = np.append(points, upper)
    return points


def brute_force_lp(lp, step, max_points=10 ** 7):
    '''
    Grid oracle for the storage program.

    The load-side coordinate (d_s when there is load to serve, r_c when
    there is surplus renewable) is scanned on a grid with the given step,
    boundaries included. Once it is fixed, d_c and h_s live in boxes and
    the objective is linear, so their best grid point is a box corner.

    Args:
        lp(StorageLP): instance
        step(float): grid resolution in kW
        max_points(int): evaluation budget

    Returns:
        LPSolution of the best grid point
    '''
    if not step > 0:
        raise ValueError(f'step must be positive, got {step}')
    p = lp.params
    if lp.l_plus > TOL_EQ:
        lower, upper = max(0., lp.l_plus - p.c_grid), min(lp.l_plus, p.c_dis)
        if lower > upper + TOL_EQ:
            raise StructuralInfeasibilityError(f'[L]+={lp.l_plus} cannot be served')
        span = upper - lower
    else:
        span = min(lp.l_minus, p.c_char)
    if span / step + 2 > max_points / 4:
        raise ResourceBudgetError(f'grid with step {step} needs more than {max_points} evaluations')

    if lp.l_plus > TOL_EQ:
        d_s = _grid(lower, upper, step)
        d_l = lp.l_plus - d_s
        r_c = np.zeros_like(d_s)
        d_c_top = np.minimum(p.c_char, p.c_grid - d_l)
        h_s_top = p.c_dis - d_s
    else:
        r_c = _grid(0., span, step)
        d_s = np.zeros_like(r_c)
        d_l = np.zeros_like(r_c)
        d_c_top = p.c_char - r_c
        h_s_top = np.full_like(r_c, p.c_dis)

    zeros = np.zeros_like(d_s)
    candidates = []
    for d_c in (zeros, d_c_top):
        for h_s in (zeros, h_s_top):
            candidates.append(np.stack([d_l, d_c, d_s, h_s, r_c], axis=1))
    x = np.stack(candidates, axis=1).reshape(-1, 5)
    values = x @ lp.objective_vector
    best = values.max()
    index = int(np.flatnonzero(values >= best - ZERO_SNAP)[0])
    return LPSolution.from_array(x[index], values[index])


def lp_residuals(sol, lp):
    '''
    Largest constraint violation of a solution (0 when feasible).
    '''
    x = sol.as_array()
    z = np.array([lp.l_plus, lp.l_minus, 1.])
    kernel = kernel_for(lp.params)
    ineq = np.max(_G @ x - kernel.rhs @ z)
    eq = abs(_A_EQ @ x - lp.l_plus)
    return max(float(ineq), float(eq), 0.)


def verify_optimality(sol, lp, tol=FEAS_TOL):
    '''
    Certificate check: sol is a vertex (5 linearly independent active
    constraints, the load balance included) and no edge leaving it is a
    feasible improving direction.
    '''
    if lp_residuals(sol, lp) > tol:
        return False
    x = sol.as_array()
    z = np.array([lp.l_plus, lp.l_minus, 1.])
    h = kernel_for(lp.params).rhs @ z
    active = np.flatnonzero(np.abs(_G @ x - h) <= tol * np.maximum(1., np.abs(h)))
    if np.linalg.matrix_rank(np.vstack([_A_EQ, _G[active]]), tol=1e-9) < 5:
        return False

    c = lp.objective_vector
    threshold = tol * max(1., float(np.linalg.norm(c)))
    for subset in itertools.combinations(active, 3):
        rows = np.vstack([_A_EQ, _G[list(subset)]])
        if np.linalg.matrix_rank(rows, tol=1e-9) < 4:
            continue
        direction = np.linalg.svd(rows)[2][-1]
        for edge in (direction, -direction):
            if np.all(_G[active] @ edge <= 1e-12) and c @ edge > threshold:
                return False
    return True


def random_storage_lp(rng, params, weight_scale=50.):
    '''
    Random instance for self-tests: residual load uniform on
    [-r_max, L_max] (clipped to c_grid), weights uniform on
    [-weight_scale, weight_scale], with exact ties and zero loads mixed in.
    '''
    load = rng.uniform(-params.r_max, min(params.l_max, params.c_grid))
    kind = rng.random()
    if kind < 0.1:
        load = 0.
    weights = rng.uniform(-weight_scale, weight_scale, size=4)
    if 0.1 <= kind < 0.25:
        weights[rng.integers(0, 4)] = 0.
    elif 0.25 <= kind < 0.4:
        i, j = rng.choice(4, size=2, replace=False)
        weights[i] = weights[j]
    w_h, w_s, w_c, w_r = (float(w) for w in weights)
    return StorageLP.from_residual(w_h, w_s, w_c, w_r, float(load), params)
