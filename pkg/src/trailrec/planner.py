"""Noisy near-optimal 4-connected pathfinding and observation prefixes.

Paths come from A* with a per-node perturbed Manhattan heuristic: on the
first evaluation for a node the admissible value h is kept with probability
1 - epsilon and inflated to h + delta otherwise, then memoized for the rest
of the search. Ties on f are broken toward larger g, then insertion order.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .gridworld import GridMap

_SEARCH_TAG = 111


class PlannerError(ValueError):
    """Invalid endpoints or unreachable goal."""


@dataclass(frozen=True)
class NoisyHeuristicParams:
    epsilon: float
    delta: float
    rng_seed: int

    def __post_init__(self):
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")


@dataclass(frozen=True)
class Path:
    """Start-to-goal inclusive cell sequence; cost is the step count."""

    cells: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.cells:
            raise PlannerError("a path must contain at least one cell")

    @property
    def cost(self) -> int:
        return len(self.cells) - 1


def astar_noisy(grid: GridMap, start: tuple[int, int], goal: tuple[int, int],
                params: NoisyHeuristicParams) -> Path:
    """A* with unit step cost and the per-node noisy Manhattan heuristic."""
    for label, (x, y) in (("start", start), ("goal", goal)):
        if not grid.in_bounds(x, y) or not grid.is_free(x, y):
            raise PlannerError(f"{label} {(x, y)} is blocked or out of bounds")

    width = grid.width
    free = ~grid.blocked
    gx, gy = goal
    eps, delta = params.epsilon, params.delta
    rng = np.random.default_rng([_SEARCH_TAG, params.rng_seed])
    start_i = start[1] * width + start[0]
    goal_i = gy * width + gx

    h_cache: dict[int, float] = {}

    def heuristic(idx: int) -> float:
        h = h_cache.get(idx)
        if h is None:
            x, y = idx % width, idx // width
            h = abs(x - gx) + abs(y - gy)
            if eps > 0.0 and rng.random() < eps:
                h += delta
            h_cache[idx] = h
        return h

    g_score = {start_i: 0}
    parent: dict[int, int] = {}
    closed: set[int] = set()
    counter = 0
    heap = [(heuristic(start_i), 0, counter, start_i)]
    while heap:
        _, neg_g, _, idx = heapq.heappop(heap)
        if idx in closed:
            continue
        closed.add(idx)
        if idx == goal_i:
            cells = []
            node = idx
            while True:
                cells.append((node % width, node // width))
                if node == start_i:
                    break
                node = parent[node]
            return Path(tuple(reversed(cells)))
        g = -neg_g
        x, y = idx % width, idx // width
        for nx, ny in ((x, y - 1), (x, y + 1), (x - 1, y), (x + 1, y)):
            if not (0 <= nx < width and 0 <= ny < grid.height) or not free[ny, nx]:
                continue
            nidx = ny * width + nx
            if nidx in closed:
                continue
            ng = g + 1
            old = g_score.get(nidx)
            if old is not None and old <= ng:
                continue
            g_score[nidx] = ng
            parent[nidx] = idx
            counter += 1
            heapq.heappush(heap, (ng + heuristic(nidx), -ng, counter, nidx))
    raise PlannerError(f"goal {goal} is unreachable from start {start}")


def truncate(path: Path, fraction) -> list[tuple[int, int]]:
    """First max(1, round-half-up(fraction/100 * |cells|)) cells of the path."""
    f = float(fraction)
    if math.isnan(f) or not (0.0 < f <= 100.0):
        raise ValueError(f"fraction must be in (0, 100], got {fraction}")
    count = int(math.floor(len(path.cells) * f / 100.0 + 0.5))
    count = max(1, min(count, len(path.cells)))
    return list(path.cells[:count])
