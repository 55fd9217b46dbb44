import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from hbyield.layout import DieSpec, PadBlockGrid, build_layout  # noqa: E402


@pytest.fixture(scope="session")
def die():
    return DieSpec()


@pytest.fixture(scope="session")
def full_w2w(die):
    return build_layout("full", die, (400.0, 400.0))


@pytest.fixture(scope="session")
def full_d2w(die):
    return build_layout("full", die, (100.0, 100.0))


def random_layout(rng, rows, cols, g=100.0, p=(0.3, 0.3, 0.4)):
    """Random grid of empty, dummy and critical cells with 2-3 member groups."""
    kinds = rng.choice([0, 1, 3], size=(rows, cols), p=p).astype(np.int8)
    groups = np.full((rows, cols), -1)
    free = list(zip(*np.nonzero(kinds != 3)))
    order = rng.permutation(len(free))
    free = [free[i] for i in order]
    gid = 0
    while len(free) >= 3:
        m = int(rng.integers(2, 4))
        mem, free = free[:m], free[m:]
        for c in mem:
            kinds[c] = 4
            groups[c] = gid
        gid += 1
    return PadBlockGrid(kinds, groups, g, g, cols * g / 1e3, rows * g / 1e3)
