import functools

import numpy as np
import pytest

from ektau import examples as ex
from ektau.space import SpaceParams

GRID = [SpaceParams(-1, 0), SpaceParams(-1, 0.5), SpaceParams(0, 0.5), SpaceParams(1, 0.5), SpaceParams(1, 0)]
TWISTED = [P for P in GRID if P.tau != 0]
CENTER = (0.05, -0.03, 0.02)


@functools.lru_cache(maxsize=None)
def small_sphere(k: float, tau: float, r: float = 0.1, center=CENTER):
    return ex.coordinate_sphere(SpaceParams(k, tau), center, r, name=f"sphere[k={k:g},tau={tau:g}]")


@functools.lru_cache(maxsize=None)
def euclidean_sphere():
    return ex.coordinate_sphere(SpaceParams(0, 0), (0.0, 0.0, 0.0), 2.0, name="euclidean-sphere")


def pytest_make_parametrize_id(config, val, argname):
    if isinstance(val, SpaceParams):
        return val.label()
    return None


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
