"""
Physical model of a storage-backed consumer: parameters, exogenous samples,
control actions, storage dynamics, per-slot cost and feasibility.

All quantities are per slot; a slot is one hour so kW and kWh coincide.
"""
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional, Tuple

from storage_dr.exceptions import (
    ConfigurationError,
    EnergyAvailabilityError,
    UnknownStateError,
)

# equality slack for the load balance (kW)
TOL_EQ = 1e-9
# slack for inequality constraints and bounds
TOL_INEQ = 1e-9


class CostMode(str, Enum):
    LOAD_SERVING = 'load_serving'
    DEMAND_RESPONSE = 'demand_response'


@dataclass(frozen=True)
class SystemParams:
    '''
    Physical constants of the storage and the grid connection.

    Args:
        eta_e(float): discharge coefficient (>= 1)
        eta_i(float): charge coefficient (0 < eta_i <= 1)
        c_grid(float): max grid draw per slot in kW
        c_char(float): max charge rate in kW
        c_dis(float): max discharge rate in kW
        l_max(float): max consumption in kW
        r_max(float): max renewable output in kW
        p_max(float): max buying price in cents/kWh
        q_max(float): max selling price in cents/kWh
    '''
    eta_e: float
    eta_i: float
    c_grid: float
    c_char: float
    c_dis: float
    l_max: float
    r_max: float
    p_max: float
    q_max: float

    @classmethod
    def from_dict(cls, values):
        missing = [name for name in cls.__dataclass_fields__ if name not in values]
        if missing:
            raise ConfigurationError(f'missing system parameters: {", ".join(missing)}')
        return cls(**{name: float(values[name]) for name in cls.__dataclass_fields__})

    def to_dict(self):
        return asdict(self)

    @property
    def b_const(self):
        '''Drift bound constant 1/2 (eta_e^2 c_dis^2 + eta_i^2 c_char^2).'''
        return 0.5 * (self.eta_e ** 2 * self.c_dis ** 2 + self.eta_i ** 2 * self.c_char ** 2)


@dataclass(frozen=True)
class ExogenousSample:
    '''
    One slot's realization of prices, renewable output and system state.
    exo_load is only present when the consumption is given (load serving).
    '''
    p: float
    q: float
    r: float
    s: str
    exo_load: Optional[float] = None

    def validate(self, params):
        '''
        Returns the list of bound violations of this sample (empty if valid).
        '''
        problems = []
        checks = [('p', self.p, params.p_max), ('q', self.q, params.q_max), ('r', self.r, params.r_max)]
        if self.exo_load is not None:
            checks.append(('exo_load', self.exo_load, params.l_max))
        for name, value, upper in checks:
            if not (-TOL_INEQ <= value <= upper + TOL_INEQ):
                problems.append(f'{name}={value} outside [0, {upper}]')
        return problems

    def to_dict(self):
        values = {'p': self.p, 'q': self.q, 'r': self.r, 's': self.s}
        if self.exo_load is not None:
            values['exo_load'] = self.exo_load
        return values

    @classmethod
    def from_dict(cls, values):
        exo_load = values.get('exo_load')
        return cls(p=float(values['p']), q=float(values['q']), r=float(values['r']),
                   s=str(values['s']),
                   exo_load=None if exo_load is None else float(exo_load))


@dataclass(frozen=True)
class ControlAction:
    l_tilde: float = 0.
    d_l: float = 0.
    d_c: float = 0.
    d_s: float = 0.
    h_s: float = 0.
    r_c: float = 0.

    @property
    def discharge(self):
        return self.d_s + self.h_s

    @property
    def charge(self):
        return self.d_c + self.r_c

    @property
    def purchase(self):
        return self.d_l + self.d_c

    def as_tuple(self):
        return (self.l_tilde, self.d_l, self.d_c, self.d_s, self.h_s, self.r_c)


@dataclass
class BatteryState:
    '''Stored energy e (kWh) of a storage provisioned with the given capacity.'''
    e: float
    capacity: float

    def within_bounds(self, tol=TOL_INEQ):
        return -tol <= self.e <= self.capacity + tol

    def apply(self, action, params):
        return BatteryState(apply_storage_dynamics(self.e, action, params), self.capacity)


@dataclass(frozen=True)
class DisutilityState:
    name: str
    beta: float
    target: float


@dataclass(frozen=True)
class DisutilitySpec:
    '''
    Quadratic disutility beta_s (target_s - l)^2 per system-state label.
    '''
    states: Tuple[DisutilityState, ...] = field(default_factory=tuple)

    def lookup(self, s):
        for state in self.states:
            if state.name == s:
                return state
        raise UnknownStateError(f'no disutility entry for system state {s!r}')

    @property
    def names(self):
        return tuple(state.name for state in self.states)

    def validate(self, params):
        problems = []
        seen = set()
        for state in self.states:
            if state.name in seen:
                problems.append(f'duplicate state {state.name!r}')
            seen.add(state.name)
            if state.beta < 0:
                problems.append(f'beta of {state.name!r} is negative')
            if not (0 <= state.target <= params.l_max):
                problems.append(f'target of {state.name!r} outside [0, {params.l_max}]')
        return problems

    @classmethod
    def from_dict(cls, values):
        return cls(tuple(DisutilityState(str(item['name']), float(item['beta']), float(item['target']))
                         for item in values['states']))

    def to_dict(self):
        return {'states': [asdict(state) for state in self.states]}


def positive_part(x):
    return max(x, 0.)


def residual_load(l_tilde, r):
    '''Consumption minus renewable output; negative values are surplus renewable.'''
    return l_tilde - r


def apply_storage_dynamics(e, a, params):
    '''
    Advances the stored energy by one slot.

    Args:
        e(float): energy level before the slot in kWh
        a(ControlAction): action of the slot
        params(SystemParams): efficiencies

    Returns:
        energy level after the slot in kWh

    Raises:
        EnergyAvailabilityError: if eta_e times the discharge exceeds e
    '''
    needed = params.eta_e * a.discharge
    if needed > e + TOL_INEQ:
        raise EnergyAvailabilityError(
            f'discharge needs {needed:.6g} kWh but only {e:.6g} kWh are stored')
    return e - needed + params.eta_i * a.charge


@dataclass(frozen=True)
class FeasibilityViolation:
    constraint: str
    amount: float
    detail: str


def check_feasibility(a, x, e, params):
    '''
    Checks an action against every per-slot constraint.

    Args:
        a(ControlAction): action to check
        x(ExogenousSample): exogenous sample of the slot
        e(float): stored energy at the start of the slot
        params(SystemParams): limits

    Returns:
        list of FeasibilityViolation, empty iff the action is feasible
    '''
    violations = []

    def excess(name, lhs, rhs, detail):
        if lhs > rhs + TOL_INEQ:
            violations.append(FeasibilityViolation(name, lhs - rhs, detail.format(lhs=lhs, rhs=rhs)))

    for name, value in zip(('l_tilde', 'd_l', 'd_c', 'd_s', 'h_s', 'r_c'), a.as_tuple()):
        if not value >= -TOL_INEQ:
            violations.append(FeasibilityViolation('nonnegativity', -value, f'{name}={value} < 0'))

    load = residual_load(a.l_tilde, x.r)
    l_plus, l_minus = positive_part(load), positive_part(-load)

    excess('consumption_limit', a.l_tilde, params.l_max, 'l_tilde={lhs:.6g} > L_max={rhs:.6g}')
    served = a.d_l + a.d_s
    if not abs(served - l_plus) <= TOL_EQ:
        violations.append(FeasibilityViolation(
            'load_balance', abs(served - l_plus), f'd_l + d_s = {served:.6g} != [L]+ = {l_plus:.6g}'))
    excess('grid_limit', a.d_l + a.d_c, params.c_grid, 'd_l + d_c = {lhs:.6g} > c_grid={rhs:.6g}')
    excess('charge_rate', a.charge, params.c_char, 'd_c + r_c = {lhs:.6g} > c_char={rhs:.6g}')
    excess('discharge_rate', a.discharge, params.c_dis, 'h_s + d_s = {lhs:.6g} > c_dis={rhs:.6g}')
    excess('surplus_charge', a.r_c, l_minus, 'r_c={lhs:.6g} > [-L]+ = {rhs:.6g}')
    excess('energy_availability', params.eta_e * a.discharge, e, 'need {lhs:.6g} kWh, stored {rhs:.6g} kWh')
    return violations


def disutility(l_tilde, s, d):
    '''beta_s (target_s - l_tilde)^2; raises UnknownStateError for unknown labels.'''
    state = d.lookup(s)
    return state.beta * (state.target - l_tilde) ** 2


def slot_cost(a, x, d, mode):
    '''
    Instantaneous cost of a feasible action, in cents.

    Load serving counts purchases minus sales, demand response adds the
    disutility of the chosen consumption. The cost may be negative.
    '''
    cost = x.p * a.purchase - x.q * a.h_s
    if CostMode(mode) is CostMode.DEMAND_RESPONSE:
        cost += disutility(a.l_tilde, x.s, d)
    return cost


def validate_params(params):
    '''
    Checks SystemParams invariants, including the capacity assumption
    eta_i c_grid >= eta_e L_max.

    Returns:
        list of violation messages, empty when the parameters are valid
    '''
    problems = []
    values = params.to_dict()
    for name, value in values.items():
        if not math.isfinite(value):
            problems.append(f'{name} is not finite')
    if not params.eta_e >= 1:
        problems.append(f'eta_e={params.eta_e} must be >= 1')
    if not 0 < params.eta_i <= 1:
        problems.append(f'eta_i={params.eta_i} must be in (0, 1]')
    for name in ('c_grid', 'c_char', 'c_dis'):
        if not values[name] > 0:
            problems.append(f'{name}={values[name]} must be > 0')
    for name in ('l_max', 'r_max', 'p_max', 'q_max'):
        if not values[name] >= 0:
            problems.append(f'{name}={values[name]} must be >= 0')
    if not params.eta_i * params.c_grid >= params.eta_e * params.l_max:
        problems.append(
            f'capacity assumption fails: eta_i*c_grid={params.eta_i * params.c_grid:.6g} '
            f'< eta_e*L_max={params.eta_e * params.l_max:.6g}')
    return problems


def require_valid_params(params):
    problems = validate_params(params)
    if problems:
        raise ConfigurationError('invalid system parameters: ' + '; '.join(problems))
    return params
