import numpy as np
import pytest

from fdmnav.env import Environment


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_env(circles=(), boxes=(), walls=(), bounds=(-20.0, -20.0, 20.0, 20.0)):
    return Environment(
        np.asarray(circles, dtype=np.float64).reshape(-1, 3),
        np.asarray(boxes, dtype=np.float64).reshape(-1, 4),
        np.asarray(walls, dtype=np.float64).reshape(-1, 4),
        bounds,
    )


@pytest.fixture
def empty_env():
    return make_env()
