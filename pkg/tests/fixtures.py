"""Shared instances for the storage_dr tests."""
import os

from storage_dr.modeling.system import DisutilitySpec, ExogenousSample, SystemParams

ACCEPTANCE = os.environ.get('STORAGE_DR_ACCEPTANCE') == '1'


def hourly_params(**overrides):
    values = dict(eta_e=1.25, eta_i=0.8, c_grid=20., c_char=12., c_dis=12.,
                  l_max=12., r_max=9., p_max=14.4, q_max=14.4)
    values.update(overrides)
    return SystemParams(**values)


def hourly_disutility():
    return DisutilitySpec.from_dict({'states': [
        {'name': 'H', 'beta': 1., 'target': 12.},
        {'name': 'L', 'beta': 1., 'target': 8.},
    ]})


def small_params():
    return SystemParams(eta_e=1., eta_i=1., c_grid=4., c_char=2., c_dis=2.,
                        l_max=2., r_max=1., p_max=0.8, q_max=0.4)


def small_disutility():
    return DisutilitySpec.from_dict({'states': [{'name': 'N', 'beta': 10., 'target': 2.}]})


def random_sample(rng, params, states=('H', 'L'), load_serving=False):
    p = float(rng.uniform(0., params.p_max))
    return ExogenousSample(
        p=p, q=float(rng.uniform(0., min(p, params.q_max))), r=float(rng.uniform(0., params.r_max)),
        s=states[int(rng.integers(len(states)))],
        exo_load=float(rng.uniform(0., params.l_max)) if load_serving else None)
