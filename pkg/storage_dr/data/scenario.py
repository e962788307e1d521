"""
Exogenous processes (prices, renewable output, system state and an optional
given load): i.i.d. outcome tables, finite Markov chains, hourly-profile
tables and an energy-adaptive adversary, plus the JSON scenario format.
"""
import json
import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from storage_dr.data.datagetter import DataGetter
from storage_dr.exceptions import ScenarioError
from storage_dr.modeling.system import (
    DisutilitySpec,
    ExogenousSample,
    SystemParams,
    validate_params,
)
from storage_dr.utils.rng import cumulative, draw_index, make_rng

logger = logging.getLogger(__name__)

PROB_TOL = 1e-12
HOURLY_PARAMS = {
    'eta_e': 1.25, 'eta_i': 0.8, 'c_grid': 20., 'c_char': 12., 'c_dis': 12.,
    'l_max': 12., 'r_max': 9., 'p_max': 14.4, 'q_max': 14.4,
}
HOURLY_DISUTILITY = {'states': [
    {'name': 'H', 'beta': 1., 'target': 12.},
    {'name': 'L', 'beta': 1., 'target': 8.},
]}


def _check_common(params, disutility):
    problems = validate_params(params)
    if problems:
        raise ScenarioError('invalid system parameters: ' + '; '.join(problems), field='params')
    problems = disutility.validate(params)
    if not disutility.states:
        problems.append('no system states')
    if problems:
        raise ScenarioError('invalid disutility: ' + '; '.join(problems), field='disutility')


def _check_samples(samples, params, disutility, prefix):
    known = set(disutility.names)
    given = [x.exo_load is not None for x in samples]
    if any(given) and not all(given):
        raise ScenarioError('exo_load must be given for all samples or none', field=prefix)
    for i, x in enumerate(samples):
        problems = x.validate(params)
        if problems:
            raise ScenarioError('sample out of bounds: ' + '; '.join(problems), field=f'{prefix}[{i}]')
        if x.s not in known:
            raise ScenarioError(f'unknown system state {x.s!r}', field=f'{prefix}[{i}].s')


@dataclass(frozen=True)
class ProfileTable:
    '''
    Hourly relative weights for price and wind, scaled to the stated daily
    mean price, wind mean and wind capacity.
    '''
    price_weights: tuple
    wind_weights: tuple
    mean_price: float = 12.
    wind_capacity: float = 9.
    wind_mean: float = 8.
    price_source: Optional[str] = None
    wind_source: Optional[str] = None

    def __post_init__(self):
        for name, weights in (('price', self.price_weights), ('wind', self.wind_weights)):
            if len(weights) != 24:
                raise ScenarioError(f'{name} profile needs 24 hourly values, got {len(weights)}',
                                    field=f'profiles.{name}')
            if min(weights) < 0 or not sum(weights) > 0:
                raise ScenarioError(f'{name} profile weights must be nonnegative and not all zero',
                                    field=f'profiles.{name}')
        if self.wind.max() > self.wind_capacity + 1e-9:
            raise ScenarioError(f'scaled wind peaks at {self.wind.max():.6g} kW above the capacity '
                                f'{self.wind_capacity} kW', field='profiles.wind')

    @property
    def prices(self):
        weights = np.asarray(self.price_weights, dtype=float)
        return weights * (self.mean_price / weights.mean())

    @property
    def wind(self):
        weights = np.asarray(self.wind_weights, dtype=float)
        return weights * (self.wind_mean / weights.mean())

    @classmethod
    def from_files(cls, price='price_hourly.csv', wind='wind_hourly.csv', getter=None, **targets):
        getter = getter or DataGetter()
        return cls(tuple(getter.get_profile(price)), tuple(getter.get_profile(wind)),
                   price_source=price, wind_source=wind, **targets)

    def to_dict(self):
        return {
            'price': self.price_source or list(self.price_weights),
            'wind': self.wind_source or list(self.wind_weights),
            'mean_price': self.mean_price,
            'wind_capacity': self.wind_capacity,
            'wind_mean': self.wind_mean,
        }


def profile_outcomes(profiles, disutility, selling_ratio=1., load_serving=False):
    '''
    Joint outcome table of the hour-uniform model: price hour and wind hour
    drawn independently and uniformly, system state uniform over the
    disutility states, q = selling_ratio p. With load_serving the given load
    is the state's target consumption.
    '''
    prices, wind = profiles.prices, profiles.wind
    states = disutility.states
    outcomes = []
    for p in prices:
        for r in wind:
            for state in states:
                outcomes.append(ExogenousSample(
                    p=float(p), q=float(selling_ratio * p), r=float(r), s=state.name,
                    exo_load=state.target if load_serving else None))
    count = len(outcomes)
    return outcomes, [1. / count] * count


class IIDScenario:
    '''
    Joint outcome table drawn independently every slot.

    Args:
        outcomes(list): ExogenousSample values
        probabilities(list): probability of each outcome
        params(SystemParams): bounds of the samples
        disutility(DisutilitySpec): states referenced by the samples
        name(str): label used in logs and metrics
    '''
    mode = 'iid'

    def __init__(self, outcomes, probabilities, params, disutility, name='iid',
                 profiles=None, selling_ratio=None):
        self.outcomes = tuple(outcomes)
        self.probabilities = np.asarray(probabilities, dtype=float)
        self.params = params
        self.disutility = disutility
        self.name = name
        self.profiles = profiles
        self.selling_ratio = selling_ratio
        self.validate()
        self._cdf = cumulative(self.probabilities)

    def validate(self):
        _check_common(self.params, self.disutility)
        if not self.outcomes:
            raise ScenarioError('outcome table is empty', field='outcomes')
        if len(self.outcomes) != len(self.probabilities):
            raise ScenarioError('one probability per outcome is required', field='outcomes')
        if np.any(self.probabilities < 0):
            raise ScenarioError('negative probability', field='outcomes')
        total = float(self.probabilities.sum())
        if abs(total - 1.) > PROB_TOL * max(1, len(self.outcomes)):
            raise ScenarioError(f'probabilities sum to {total!r}, not 1', field='outcomes')
        _check_samples(self.outcomes, self.params, self.disutility, 'outcomes')

    @property
    def load_serving(self):
        return self.outcomes[0].exo_load is not None

    def outcome_table(self):
        return list(zip(self.outcomes, self.probabilities.tolist()))

    def transition_matrix(self):
        '''Outcome-to-outcome law (every row is the outcome distribution).'''
        return np.tile(self.probabilities, (len(self.outcomes), 1))

    def stream(self, seed, run_index=0, cfg=None):
        return IIDStream(self, make_rng(seed, run_index))

    def to_dict(self):
        values = {
            'name': self.name,
            'mode': self.mode,
            'params': self.params.to_dict(),
            'disutility': self.disutility.to_dict(),
        }
        if self.profiles is not None:
            values['load_serving'] = self.load_serving
            values['profiles'] = dict(self.profiles.to_dict(), selling_ratio=self.selling_ratio)
        else:
            values['outcomes'] = [dict(x.to_dict(), probability=prob) for x, prob in self.outcome_table()]
        return values


class MarkovScenario:
    '''
    Finite irreducible aperiodic chain; every chain state emits one sample.
    '''
    mode = 'markov'

    def __init__(self, states, transition, emissions, params, disutility, name='markov', initial=None):
        self.states = tuple(states)
        self.transition = np.asarray(transition, dtype=float)
        self.outcomes = tuple(emissions)
        self.params = params
        self.disutility = disutility
        self.name = name
        self.initial = initial if initial is not None else (self.states[0] if self.states else None)
        self.validate()
        self._index = {name: i for i, name in enumerate(self.states)}
        self._cdfs = [cumulative(row) for row in self.transition]

    def validate(self):
        _check_common(self.params, self.disutility)
        n = len(self.states)
        if n == 0:
            raise ScenarioError('chain has no states', field='chain.states')
        if len(set(self.states)) != n:
            raise ScenarioError('duplicate chain state names', field='chain.states')
        if self.transition.shape != (n, n):
            raise ScenarioError(f'transition matrix must be {n}x{n}', field='chain.transition')
        if len(self.outcomes) != n:
            raise ScenarioError('one emission per chain state is required', field='chain.states')
        if np.any(self.transition < 0):
            raise ScenarioError('negative transition probability', field='chain.transition')
        for i, row in enumerate(self.transition):
            if abs(row.sum() - 1.) > PROB_TOL * n:
                raise ScenarioError(f'row {i} sums to {row.sum()!r}, not 1', field=f'chain.transition[{i}]')
        if self.initial not in self.states:
            raise ScenarioError(f'initial state {self.initial!r} is not a chain state', field='chain.initial')
        problem = chain_problem(self.transition)
        if problem:
            raise ScenarioError(problem, field='chain.transition')
        _check_samples(self.outcomes, self.params, self.disutility, 'chain.states')

    @property
    def load_serving(self):
        return self.outcomes[0].exo_load is not None

    @property
    def probabilities(self):
        return self.stationary_distribution()

    def index(self, state):
        return self._index[state]

    def emission(self, state):
        return self.outcomes[self._index[state]]

    def transition_matrix(self):
        return self.transition

    def stationary_distribution(self):
        n = len(self.states)
        system = np.vstack([self.transition.T - np.eye(n), np.ones(n)])
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.
        return np.linalg.lstsq(system, rhs, rcond=None)[0]

    def stream(self, seed, run_index=0, cfg=None):
        return MarkovStream(self, make_rng(seed, run_index))

    def to_dict(self):
        return {
            'name': self.name,
            'mode': self.mode,
            'params': self.params.to_dict(),
            'disutility': self.disutility.to_dict(),
            'chain': {
                'initial': self.initial,
                'states': [{'name': name, 'sample': x.to_dict()}
                           for name, x in zip(self.states, self.outcomes)],
                'transition': self.transition.tolist(),
            },
        }


def _reachable(adjacency, start):
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adjacency[u]):
            if int(v) not in seen:
                seen.add(int(v))
                queue.append(int(v))
    return seen


def chain_problem(transition):
    '''
    Returns None for an irreducible aperiodic chain, otherwise the name of
    the failed property.
    '''
    adjacency = np.asarray(transition) > 0
    n = adjacency.shape[0]
    if len(_reachable(adjacency, 0)) < n or len(_reachable(adjacency.T, 0)) < n:
        return 'chain is not irreducible'
    level = {0: 0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adjacency[u]):
            v = int(v)
            if v not in level:
                level[v] = level[u] + 1
                queue.append(v)
    period = 0
    for u in range(n):
        for v in np.flatnonzero(adjacency[u]):
            period = math.gcd(period, abs(level[u] + 1 - level[int(v)]))
    if period != 1:
        return f'chain is periodic (period {period})'
    return None


class AdversarialScenario:
    '''
    Energy-adaptive worst case within the sample bounds. Prices flip between
    zero and their maximum and the renewable output alternates between 0 and
    r_max; above theta the adversary offers free surplus energy, below the
    empty threshold it offers the maximum selling price.
    '''
    mode = 'adversarial'

    def __init__(self, params, disutility, name='adversarial', load_serving=False):
        self.params = params
        self.disutility = disutility
        self.name = name
        self._load_serving = load_serving
        _check_common(params, disutility)

    @property
    def load_serving(self):
        return self._load_serving

    def stream(self, seed, run_index=0, cfg=None):
        if cfg is None:
            raise ScenarioError('the adversarial scenario needs the controller sizing (theta)')
        return AdversarialStream(self, make_rng(seed, run_index), cfg.theta)

    def to_dict(self):
        return {
            'name': self.name,
            'mode': self.mode,
            'load_serving': self._load_serving,
            'params': self.params.to_dict(),
            'disutility': self.disutility.to_dict(),
        }


def sample_iid(s, rng):
    '''One draw from the outcome table of an IIDScenario.'''
    return s.outcomes[draw_index(rng, s._cdf)]


def step_markov(s, current, rng):
    '''
    Returns:
        (next state name, its emitted ExogenousSample)
    '''
    following = s.states[draw_index(rng, s._cdfs[s.index(current)])]
    return following, s.emission(following)


class IIDStream:
    def __init__(self, scenario, rng):
        self.scenario = scenario
        self.rng = rng

    def next(self, e=None):
        index = draw_index(self.rng, self.scenario._cdf)
        return index, self.scenario.outcomes[index]


class MarkovStream:
    '''Emits the initial state's sample first, then follows the chain.'''

    def __init__(self, scenario, rng):
        self.scenario = scenario
        self.rng = rng
        self.current = None

    def next(self, e=None):
        if self.current is None:
            self.current = self.scenario.initial
            sample = self.scenario.emission(self.current)
        else:
            self.current, sample = step_markov(self.scenario, self.current, self.rng)
        return self.scenario.index(self.current), sample


class AdversarialStream:
    def __init__(self, scenario, rng, theta):
        self.scenario = scenario
        self.rng = rng
        self.theta = theta
        params = scenario.params
        self.empty_threshold = params.eta_e * min(params.l_max, params.c_dis)
        self.t = 0

    def next(self, e=None):
        params = self.scenario.params
        states = self.scenario.disutility.states
        state = states[int(self.rng.integers(len(states)))]
        t, self.t = self.t, self.t + 1
        if e is not None and e > self.theta:
            p, q, r = 0., 0., params.r_max
        elif e is not None and e < self.empty_threshold:
            p, q, r = params.p_max, params.q_max, 0.
        else:
            flip = t % 2 == 0
            p = params.p_max if flip else 0.
            q = params.q_max if not flip else 0.
            r = params.r_max if t % 4 < 2 else 0.
        exo_load = None
        if self.scenario.load_serving:
            exo_load = params.l_max if t % 3 else 0.
        return -1, ExogenousSample(p=p, q=q, r=r, s=state.name, exo_load=exo_load)


def build_hourly_scenario(load_serving=False, overrides=None, profiles=None, getter=None):
    '''
    Hour-uniform i.i.d. setup on the bundled hourly profiles:
    eta_e=1.25, eta_i=0.8, c_grid=20, c_char=c_dis=12, L_max=12 with two
    equally likely states H (target 12 kW) and L (target 8 kW), beta=1 and
    selling price equal to the buying price.

    Args:
        load_serving(bool): give every sample a load equal to its state's target
        overrides(dict): replacement values for any system parameter
        profiles(ProfileTable): replacement hourly profiles

    Returns:
        (IIDScenario, SystemParams, DisutilitySpec)
    '''
    values = dict(HOURLY_PARAMS)
    unknown = set(overrides or {}) - set(values)
    if unknown:
        raise ScenarioError(f'unknown parameter overrides: {", ".join(sorted(unknown))}', field='params')
    values.update(overrides or {})
    params = SystemParams.from_dict(values)
    disutility = DisutilitySpec.from_dict(HOURLY_DISUTILITY)
    if profiles is None:
        profiles = ProfileTable.from_files(getter=getter, wind_capacity=params.r_max)
    outcomes, probabilities = profile_outcomes(profiles, disutility, load_serving=load_serving)
    name = 'hourly_load' if load_serving else 'hourly'
    scenario = IIDScenario(outcomes, probabilities, params, disutility, name=name,
                           profiles=profiles, selling_ratio=1.)
    return scenario, params, disutility


def _field(values, key, where):
    if key not in values:
        raise ScenarioError(f'missing field {key!r}', field=f'{where}{key}' if where else key)
    return values[key]


def _profile_weights(spec, getter, field):
    if isinstance(spec, str):
        return tuple(getter.get_profile(spec)), spec
    try:
        return tuple(float(v) for v in spec), None
    except (TypeError, ValueError) as err:
        raise ScenarioError(f'profile must be a file name or 24 numbers: {err}', field=field) from err


def scenario_from_dict(values, getter=None):
    '''Builds and validates a scenario from its JSON document.'''
    getter = getter or DataGetter()
    try:
        mode = _field(values, 'mode', '')
        name = values.get('name', mode)
        try:
            params = SystemParams.from_dict(_field(values, 'params', ''))
        except (TypeError, ValueError) as err:
            if isinstance(err, ScenarioError):
                raise
            raise ScenarioError(str(err), field='params') from err
        disutility = DisutilitySpec.from_dict(_field(values, 'disutility', ''))

        if mode == 'iid':
            if 'outcomes' in values:
                outcomes, probabilities = [], []
                for i, item in enumerate(values['outcomes']):
                    try:
                        outcomes.append(ExogenousSample.from_dict(item))
                        probabilities.append(float(item['probability']))
                    except KeyError as err:
                        raise ScenarioError(f'missing field {err}', field=f'outcomes[{i}]') from err
                return IIDScenario(outcomes, probabilities, params, disutility, name=name)
            spec = _field(values, 'profiles', '')
            price, price_source = _profile_weights(_field(spec, 'price', 'profiles.'), getter,
                                                   'profiles.price')
            wind, wind_source = _profile_weights(_field(spec, 'wind', 'profiles.'), getter,
                                                 'profiles.wind')
            profiles = ProfileTable(price, wind,
                                    mean_price=float(spec.get('mean_price', 12.)),
                                    wind_capacity=float(spec.get('wind_capacity', params.r_max)),
                                    wind_mean=float(spec.get('wind_mean', 8.)),
                                    price_source=price_source, wind_source=wind_source)
            selling_ratio = float(spec.get('selling_ratio', 1.))
            outcomes, probabilities = profile_outcomes(profiles, disutility, selling_ratio,
                                                       bool(values.get('load_serving', False)))
            return IIDScenario(outcomes, probabilities, params, disutility, name=name,
                               profiles=profiles, selling_ratio=selling_ratio)

        if mode == 'markov':
            chain = _field(values, 'chain', '')
            states = [str(_field(item, 'name', f'chain.states[{i}].'))
                      for i, item in enumerate(_field(chain, 'states', 'chain.'))]
            emissions = [ExogenousSample.from_dict(_field(item, 'sample', f'chain.states[{i}].'))
                         for i, item in enumerate(chain['states'])]
            transition = _field(chain, 'transition', 'chain.')
            return MarkovScenario(states, transition, emissions, params, disutility,
                                  name=name, initial=chain.get('initial'))

        if mode == 'adversarial':
            return AdversarialScenario(params, disutility, name=name,
                                       load_serving=bool(values.get('load_serving', False)))

        raise ScenarioError(f'unknown mode {mode!r}; expected iid, markov or adversarial', field='mode')
    except (KeyError, TypeError, ValueError) as err:
        if isinstance(err, ScenarioError):
            raise
        raise ScenarioError(f'malformed scenario: {err}') from err


def load_scenario_config(path, getter=None):
    '''
    Reads and validates a scenario JSON file; path may also be the name of
    a bundled scenario ('hourly', 'markov4', ...).

    Raises:
        ScenarioError: parse errors (with line) and invariant violations (with field)
    '''
    getter = getter or DataGetter()
    resolved = getter.scenario_path(str(path))
    try:
        with open(resolved) as handle:
            values = json.load(handle)
    except json.JSONDecodeError as err:
        raise ScenarioError(f'cannot parse {resolved}: {err.msg}', line=err.lineno) from err
    if not isinstance(values, dict):
        raise ScenarioError(f'{resolved} does not contain a JSON object', line=1)
    scenario = scenario_from_dict(values, getter=getter)
    logger.info('Loaded scenario %s (%s, %d outcomes) from %s', scenario.name, scenario.mode,
                len(getattr(scenario, 'outcomes', ())), resolved)
    return scenario


def save_scenario_config(scenario, path):
    with open(path, 'w') as handle:
        json.dump(scenario.to_dict(), handle, indent=2)
        handle.write('\n')
    return path
