from collections import deque
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trailrec import (GridMap, NoisyHeuristicParams, Path, PlannerError,
                      astar_noisy, truncate)

from conftest import random_open_map


def bfs_cost(grid, start, goal):
    """Independent shortest-path oracle: plain breadth-first search."""
    if start == goal:
        return 0
    dist = {start: 0}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for nxt in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            nx, ny = nxt
            if (0 <= nx < grid.width and 0 <= ny < grid.height
                    and not grid.blocked[ny, nx] and nxt not in dist):
                dist[nxt] = dist[(x, y)] + 1
                if nxt == goal:
                    return dist[nxt]
                queue.append(nxt)
    return None


def assert_valid_path(grid, path, start, goal):
    cells = path.cells
    assert cells[0] == start
    assert cells[-1] == goal
    assert path.cost == len(cells) - 1
    for (x0, y0), (x1, y1) in zip(cells, cells[1:]):
        assert abs(x0 - x1) + abs(y0 - y1) == 1
    for x, y in cells:
        assert not grid.blocked[y, x]


def random_endpoints(grid, rng):
    free = [(x, y) for x, y in grid.free_cells()]
    while True:
        a, b = (free[i] for i in rng.choice(len(free), 2, replace=False))
        if bfs_cost(grid, a, b) is not None:
            return a, b


class TestAstarNoisy:
    def test_start_equals_goal(self, noiseless_params):
        grid = GridMap(np.zeros((4, 4), bool))
        path = astar_noisy(grid, (1, 1), (1, 1), noiseless_params)
        assert path.cells == ((1, 1),)
        assert path.cost == 0

    def test_noiseless_matches_bfs_on_100_random_maps(self):
        rng = np.random.default_rng(17)
        params = NoisyHeuristicParams(0.0, 10.0, 0)
        for trial in range(100):
            grid = random_open_map(rng, size=16, name=f"t{trial}")
            start, goal = random_endpoints(grid, rng)
            path = astar_noisy(grid, start, goal, params)
            assert_valid_path(grid, path, start, goal)
            assert path.cost == bfs_cost(grid, start, goal)

    def test_noisy_paths_valid_and_at_least_optimal(self):
        rng = np.random.default_rng(23)
        for trial in range(50):
            grid = random_open_map(rng, size=16, name=f"t{trial}")
            start, goal = random_endpoints(grid, rng)
            path = astar_noisy(grid, start, goal,
                               NoisyHeuristicParams(0.2, 10.0, trial))
            assert_valid_path(grid, path, start, goal)
            assert path.cost >= bfs_cost(grid, start, goal)

    def test_noise_increases_mean_cost(self):
        rng = np.random.default_rng(31)
        noisy_total = optimal_total = 0
        for trial in range(200):
            grid = random_open_map(rng, size=16, density=0.3, name=f"t{trial}")
            start, goal = random_endpoints(grid, rng)
            noisy = astar_noisy(grid, start, goal,
                                NoisyHeuristicParams(0.2, 10.0, trial))
            noisy_total += noisy.cost
            optimal_total += bfs_cost(grid, start, goal)
        assert noisy_total > optimal_total

    def test_validity_on_1000_random_instances(self):
        rng = np.random.default_rng(41)
        checked = 0
        while checked < 1000:
            grid = random_open_map(rng, size=16, name=f"v{checked}")
            for _ in range(10):
                start, goal = random_endpoints(grid, rng)
                path = astar_noisy(grid, start, goal,
                                   NoisyHeuristicParams(0.2, 10.0, checked))
                assert_valid_path(grid, path, start, goal)
                checked += 1

    def test_deterministic_given_seed(self, small_scenario):
        params = NoisyHeuristicParams(0.2, 10.0, 99)
        a = astar_noisy(small_scenario.map, small_scenario.start,
                        small_scenario.goals[0], params)
        b = astar_noisy(small_scenario.map, small_scenario.start,
                        small_scenario.goals[0], params)
        assert a == b

    def test_unreachable_goal(self, noiseless_params):
        blocked = np.zeros((4, 4), bool)
        blocked[:, 2] = True  # wall splits the map
        grid = GridMap(blocked)
        with pytest.raises(PlannerError, match="unreachable"):
            astar_noisy(grid, (0, 0), (3, 3), noiseless_params)

    def test_blocked_endpoint(self, noiseless_params):
        blocked = np.zeros((4, 4), bool)
        blocked[1, 1] = True
        grid = GridMap(blocked)
        with pytest.raises(PlannerError, match="start"):
            astar_noisy(grid, (1, 1), (3, 3), noiseless_params)
        with pytest.raises(PlannerError, match="goal"):
            astar_noisy(grid, (0, 0), (4, 0), noiseless_params)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            NoisyHeuristicParams(-0.1, 10.0, 0)
        with pytest.raises(ValueError):
            NoisyHeuristicParams(1.5, 10.0, 0)
        with pytest.raises(ValueError):
            NoisyHeuristicParams(0.2, 0.0, 0)


def _path_of_length(n):
    return Path(tuple((x, 0) for x in range(n)))


class TestTruncate:
    def test_full_fraction_is_identity(self):
        path = _path_of_length(12)
        assert truncate(path, 100) == list(path.cells)

    def test_twelve_cells_at_75(self):
        assert len(truncate(_path_of_length(12), 75)) == 9

    def test_ten_cells_at_25_rounds_half_up(self):
        assert len(truncate(_path_of_length(10), 25)) == 3

    @pytest.mark.parametrize("fraction", [25, 50, 75, 100])
    @pytest.mark.parametrize("length", range(1, 21))
    def test_rounding_table(self, length, fraction):
        # oracle: exact half-up rounding with rationals, floored at one cell
        expected = max(1, (Fraction(length * fraction, 100) + Fraction(1, 2)).__floor__())
        got = truncate(_path_of_length(length), fraction)
        assert len(got) == expected
        assert got == [(x, 0) for x in range(expected)]

    @pytest.mark.parametrize("fraction", [0, -5, 101, 100.00001])
    def test_out_of_range_fraction(self, fraction):
        with pytest.raises(ValueError):
            truncate(_path_of_length(5), fraction)

    @given(st.integers(1, 400), st.integers(1, 100))
    @settings(max_examples=200, deadline=None)
    def test_prefix_properties(self, length, fraction):
        path = _path_of_length(length)
        out = truncate(path, fraction)
        assert 1 <= len(out) <= length
        assert out == list(path.cells[: len(out)])
        exact = max(1, (Fraction(length * fraction, 100) + Fraction(1, 2)).__floor__())
        assert len(out) == min(length, exact)
