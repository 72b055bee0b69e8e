"""Occupancy-grid maps, MovingAI map files, and scenario sampling.

Coordinates are (x, y) pairs with x as column index and y as row index;
the blocked array is indexed [y, x]. Movement is 4-connected.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

PASSABLE_CHARS = frozenset(".G")
BLOCKED_CHAR = "@"
N_GOALS = 10

# rng stream tags; arbitrary but fixed so streams never collide across modules
_SCENARIO_TAG = 101
_MAPGEN_TAG = 102


class MapError(ValueError):
    """Malformed map file or invalid map operation."""


class ScenarioError(ValueError):
    """Scenario cannot be sampled, parsed, or validated."""


class GridMap:
    """Immutable occupancy grid.

    The encoder and network stages require square maps with a power-of-two
    side; GridMap itself accepts any rectangle so that raw MovingAI files
    and small fixtures can be represented before downscaling.
    """

    __slots__ = ("width", "height", "blocked", "name")

    def __init__(self, blocked, name: str = "unnamed"):
        arr = np.array(blocked, dtype=bool)
        if arr.ndim != 2 or arr.size == 0:
            raise MapError(f"grid must be 2-D and non-empty, got shape {arr.shape}")
        arr.setflags(write=False)
        self.blocked = arr
        self.height, self.width = arr.shape
        self.name = name

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, x: int, y: int) -> bool:
        return not self.blocked[y, x]

    def free_cells(self) -> list[tuple[int, int]]:
        ys, xs = np.nonzero(~self.blocked)
        return [(int(x), int(y)) for x, y in zip(xs, ys)]

    def blocked_count(self) -> int:
        return int(self.blocked.sum())

    def __eq__(self, other):
        if not isinstance(other, GridMap):
            return NotImplemented
        return self.blocked.shape == other.blocked.shape and bool(
            np.array_equal(self.blocked, other.blocked)
        )

    __hash__ = None

    def __repr__(self):
        return f"GridMap({self.width}x{self.height}, {self.blocked_count()} blocked, {self.name!r})"


def parse_movingai(text: str, name: str = "unnamed") -> GridMap:
    """Parse MovingAI map text: type/height/width headers, then the grid body.

    A cell is free iff its character is '.' or 'G'; every other character is
    blocked. Errors name the offending 1-based line number.
    """
    lines = text.splitlines()

    def fail(lineno: int, msg: str):
        raise MapError(f"line {lineno}: {msg}")

    header_keys = ("type", "height", "width")
    values: dict[str, str] = {}
    for i, key in enumerate(header_keys):
        lineno = i + 1
        if i >= len(lines):
            fail(lineno, f"missing '{key}' header")
        parts = lines[i].split()
        if len(parts) != 2:
            fail(lineno, f"expected '{key} <value>', got {lines[i]!r}")
        if parts[0] != key:
            if parts[0] in header_keys or parts[0] == "map":
                fail(lineno, f"header {parts[0]!r} out of order, expected {key!r}")
            fail(lineno, f"unknown header key {parts[0]!r}")
        values[key] = parts[1]
    try:
        height = int(values["height"])
        width = int(values["width"])
    except ValueError:
        fail(2, f"height/width must be integers, got {values['height']!r}/{values['width']!r}")
    if height <= 0 or width <= 0:
        fail(2, f"height/width must be positive, got {height}x{width}")
    if len(lines) < 4 or lines[3].strip() != "map":
        fail(4, "expected 'map' line")

    rows = lines[4:]
    while rows and rows[-1].strip() == "":
        rows.pop()
    if len(rows) != height:
        fail(4 + min(len(rows), height) + 1,
             f"header says {height} rows but body has {len(rows)}")
    blocked = np.empty((height, width), dtype=bool)
    for r, row in enumerate(rows):
        if len(row) != width:
            fail(5 + r, f"row has {len(row)} characters, expected {width}")
        blocked[r] = [ch not in PASSABLE_CHARS for ch in row]
    return GridMap(blocked, name=name)


def to_movingai(grid: GridMap) -> str:
    """Render a grid back to MovingAI text ('.' free, '@' blocked)."""
    rows = ["".join(BLOCKED_CHAR if b else "." for b in row) for row in grid.blocked]
    return "\n".join(["type octile", f"height {grid.height}", f"width {grid.width}", "map", *rows]) + "\n"


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def downscale(grid: GridMap, target: int) -> GridMap:
    """Reduce a grid to target x target with any-blocked (conservative) pooling.

    Target cell (i, j) covers source rows floor(i*H/T)..floor((i+1)*H/T)-1 and
    the analogous columns; it is blocked iff any covered source cell is.
    """
    if not _is_power_of_two(target):
        raise MapError(f"target size must be a power of two, got {target}")
    if target > grid.width or target > grid.height:
        raise MapError(f"target {target} exceeds source {grid.width}x{grid.height}")
    row_starts = (np.arange(target) * grid.height) // target
    col_starts = (np.arange(target) * grid.width) // target
    pooled = np.logical_or.reduceat(grid.blocked, row_starts, axis=0)
    pooled = np.logical_or.reduceat(pooled, col_starts, axis=1)
    return GridMap(pooled, name=f"{grid.name}@{target}")


def reachable_from(grid: GridMap, start: tuple[int, int]) -> set[tuple[int, int]]:
    """All free cells 4-connected to start (start included if free)."""
    x0, y0 = start
    if not grid.in_bounds(x0, y0) or not grid.is_free(x0, y0):
        return set()
    seen = {(x0, y0)}
    queue = deque([(x0, y0)])
    while queue:
        x, y = queue.popleft()
        for nx, ny in ((x, y - 1), (x, y + 1), (x - 1, y), (x + 1, y)):
            if (nx, ny) not in seen and grid.in_bounds(nx, ny) and grid.is_free(nx, ny):
                seen.add((nx, ny))
                queue.append((nx, ny))
    return seen


def largest_component(grid: GridMap) -> list[tuple[int, int]]:
    """Largest 4-connected free component, as row-major sorted cells.

    Ties between equal-sized components go to the one whose first cell comes
    earliest in row-major order, so the result is deterministic.
    """
    remaining = set(grid.free_cells())
    best: set[tuple[int, int]] = set()
    for cell in sorted(remaining, key=lambda c: (c[1], c[0])):
        if cell not in remaining:
            continue
        comp = reachable_from(grid, cell)
        remaining -= comp
        if len(comp) > len(best):
            best = comp
    return sorted(best, key=lambda c: (c[1], c[0]))


@dataclass(frozen=True)
class Scenario:
    """A map with a fixed start, ten candidate goals, and the true goal index."""

    map: GridMap
    start: tuple[int, int]
    goals: tuple[tuple[int, int], ...]
    true_goal: int
    seed: int

    def __post_init__(self):
        if len(self.goals) != N_GOALS:
            raise ScenarioError(f"need exactly {N_GOALS} goals, got {len(self.goals)}")
        if len(set(self.goals)) != N_GOALS:
            raise ScenarioError("goals must be distinct")
        if self.start in self.goals:
            raise ScenarioError(f"start {self.start} collides with a goal")
        if not (0 <= self.true_goal < N_GOALS):
            raise ScenarioError(f"true_goal must be in 0..9, got {self.true_goal}")
        for cell in (self.start, *self.goals):
            x, y = cell
            if not self.map.in_bounds(x, y) or not self.map.is_free(x, y):
                raise ScenarioError(f"cell {cell} is blocked or out of bounds")
        reachable = reachable_from(self.map, self.start)
        for g in self.goals:
            if g not in reachable:
                raise ScenarioError(f"goal {g} is not reachable from start {self.start}")

    @property
    def goal_cell(self) -> tuple[int, int]:
        return self.goals[self.true_goal]


def sample_scenario(grid: GridMap, rng_seed: int) -> Scenario:
    """Sample start + 10 goals uniformly without replacement from the largest
    free component, plus a uniform true-goal index. Reproducible from the seed."""
    comp = largest_component(grid)
    if len(comp) < N_GOALS + 1:
        raise ScenarioError(
            f"largest free component has {len(comp)} cells; need at least {N_GOALS + 1}"
        )
    rng = np.random.default_rng([_SCENARIO_TAG, rng_seed])
    picks = rng.choice(len(comp), size=N_GOALS + 1, replace=False)
    start = comp[picks[0]]
    goals = tuple(comp[i] for i in picks[1:])
    true_goal = int(rng.integers(N_GOALS))
    return Scenario(grid, start, goals, true_goal, rng_seed)


def serialize_scenario(scenario: Scenario) -> str:
    """Flat key=value text: map name, start, goal0..goal9, true_goal, seed."""
    lines = [f"map={scenario.map.name}", f"start={scenario.start[0]},{scenario.start[1]}"]
    for i, (x, y) in enumerate(scenario.goals):
        lines.append(f"goal{i}={x},{y}")
    lines.append(f"true_goal={scenario.true_goal}")
    lines.append(f"seed={scenario.seed}")
    return "\n".join(lines) + "\n"


def parse_scenario(text: str, grid: GridMap) -> Scenario:
    """Parse serialize_scenario output against the map it references."""
    fields: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()

    def cell(key: str) -> tuple[int, int]:
        try:
            x, y = fields[key].split(",")
            return (int(x), int(y))
        except (KeyError, ValueError):
            raise ScenarioError(f"missing or malformed field {key!r}") from None

    if "map" not in fields:
        raise ScenarioError("missing field 'map'")
    if fields["map"] != grid.name:
        raise ScenarioError(f"scenario is for map {fields['map']!r}, got {grid.name!r}")
    try:
        true_goal = int(fields["true_goal"])
        seed = int(fields["seed"])
    except (KeyError, ValueError):
        raise ScenarioError("missing or malformed field 'true_goal'/'seed'") from None
    goals = tuple(cell(f"goal{i}") for i in range(N_GOALS))
    return Scenario(grid, cell("start"), goals, true_goal, seed)


def generate_map(size: int, seed: int, density: float = 0.38, smooth_steps: int = 3,
                 name: str | None = None) -> GridMap:
    """Generate a cave-like occupancy grid with a large open component.

    Random fill at the given density, then cellular-automata smoothing
    (blocked iff >= 5 of the 3x3 neighborhood is blocked, borders padded as
    blocked). Retries derived seeds until the largest free component covers
    at least a quarter of the grid.
    """
    if not _is_power_of_two(size) or size < 8:
        raise MapError(f"size must be a power of two >= 8, got {size}")
    if not (0.0 <= density < 1.0):
        raise MapError(f"density must be in [0, 1), got {density}")
    for attempt in range(64):
        rng = np.random.default_rng([_MAPGEN_TAG, seed, attempt])
        blocked = rng.random((size, size)) < density
        for _ in range(smooth_steps):
            padded = np.pad(blocked, 1, constant_values=True).astype(np.int8)
            neighbors = sum(
                padded[dy:dy + size, dx:dx + size]
                for dy in range(3) for dx in range(3)
            )
            blocked = neighbors >= 5
        grid = GridMap(blocked, name=name or f"gen-{seed}-{size}")
        if len(largest_component(grid)) >= max(N_GOALS + 1, (size * size) // 4):
            return grid
    raise MapError(f"could not generate a map with a large open component (seed {seed})")
