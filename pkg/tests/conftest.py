import numpy as np
import pytest

from trailrec import GridMap, NoisyHeuristicParams, sample_scenario


def random_open_map(rng, size=16, density=0.25, name="rand"):
    """Random obstacle map that keeps a component large enough for scenarios."""
    while True:
        blocked = rng.random((size, size)) < density
        grid = GridMap(blocked, name=name)
        from trailrec import largest_component
        if len(largest_component(grid)) >= size * size // 3:
            return grid


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def small_scenario(rng):
    grid = random_open_map(rng, size=16, name="small")
    return sample_scenario(grid, 5)


@pytest.fixture
def noiseless_params():
    return NoisyHeuristicParams(0.0, 10.0, 7)


@pytest.fixture
def noisy_params():
    return NoisyHeuristicParams(0.2, 10.0, 7)
