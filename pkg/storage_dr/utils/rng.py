"""
Seeded random streams.

Every stream is a numpy Philox counter-based generator keyed by
SeedSequence(seed, spawn_key=(stream,)), so a (seed, stream) pair gives the
same draws on every platform and parallel runs get independent streams.
"""
import numpy as np


def make_rng(seed, stream=0):
    '''
    Args:
        seed(int): nonnegative run seed
        stream(int): index of the sub-stream (run index in a sweep)

    Returns:
        np.random.Generator backed by Philox
    '''
    if int(seed) < 0 or int(stream) < 0:
        raise ValueError(f'seed and stream must be nonnegative, got {seed}, {stream}')
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(sequence))


def draw_index(rng, cdf):
    '''Index i with cdf[i-1] <= u < cdf[i] for one uniform u.'''
    u = rng.random()
    return min(int(np.searchsorted(cdf, u, side='right')), len(cdf) - 1)


def cumulative(probabilities):
    cdf = np.cumsum(np.asarray(probabilities, dtype=float))
    cdf[-1] = 1.
    return cdf
