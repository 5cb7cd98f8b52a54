import random

import pytest

from hcpdq.heiface import HeParams, SimulatorBackend
from hcpdq.zpcore import PrimeField


@pytest.fixture(scope="session")
def f65537():
    return PrimeField(65537)


@pytest.fixture()
def rng():
    return random.Random(0xC0FFEE)


@pytest.fixture(scope="session")
def sim_small():
    """n=16 simulator with a generous depth budget."""
    return SimulatorBackend(HeParams(n=16, p=65537, max_level=24), seed=101)


def make_sparse(rng, N, s, p, exact=False):
    """Random s-sparse dense list plus its (index, value) pairs."""
    count = s if exact else rng.randrange(0, s + 1)
    support = sorted(rng.sample(range(1, N + 1), count))
    dense = [0] * N
    pairs = []
    for i in support:
        v = rng.randrange(1, p)
        dense[i - 1] = v
        pairs.append((i, v))
    return dense, pairs
