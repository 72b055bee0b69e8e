"""Balanced example-set generation and the GRD1 container format.

Within one fixed scenario, path variability comes only from heuristic noise;
every path gets an independent rng stream derived from (seed, goal, path
index), so datasets are reproducible and train/test sets built from distinct
seeds do not share paths.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .encoder import N_CHANNELS, TrailBitmap, encode
from .gridworld import N_GOALS, Scenario
from .planner import NoisyHeuristicParams, Path, astar_noisy, truncate

OBSERVABILITIES = (25, 50, 75, 100)

GRD_MAGIC = b"GRD1"
_HEADER = struct.Struct("<4sHI")   # magic (version digit included), grid size, count
_EXAMPLE = struct.Struct("<BBI")   # label, observability, path id

_PATH_TAG = 121
_SHUFFLE_TAG = 122
_SHOT_TAG = 123


class DatasetError(ValueError):
    """Invalid dataset construction request."""


class FormatError(DatasetError):
    """Corrupt or out-of-contract GRD1 payload."""


def child_seed(*parts: int) -> int:
    """Derive a decorrelated integer seed from a tuple of non-negative ints.

    Masked to 47 bits so seeds survive an exact f64 round trip in checkpoints.
    """
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)
    return int(state[0]) & 0x7FFF_FFFF_FFFF


@dataclass(frozen=True)
class Example:
    bitmap: TrailBitmap
    label: int
    observability: int
    path_id: int

    def __post_init__(self):
        if not (0 <= self.label < N_GOALS):
            raise DatasetError(f"label must be in 0..{N_GOALS - 1}, got {self.label}")
        if not (0 < self.observability <= 100):
            raise DatasetError(f"observability must be in 1..100, got {self.observability}")
        if not (0 <= self.path_id < 2 ** 32):
            raise DatasetError(f"path_id must fit u32, got {self.path_id}")


@dataclass(frozen=True)
class DatasetSpec:
    scenario: Scenario
    n_paths_per_goal: int
    planner_params: NoisyHeuristicParams
    seed: int
    observabilities: tuple[int, ...] = OBSERVABILITIES

    def __post_init__(self):
        if self.n_paths_per_goal < 1:
            raise DatasetError(f"n_paths_per_goal must be >= 1, got {self.n_paths_per_goal}")
        if not self.observabilities:
            raise DatasetError("need at least one observability level")

    @property
    def total_examples(self) -> int:
        return N_GOALS * self.n_paths_per_goal * len(self.observabilities)


def plan_paths(scenario: Scenario, n_paths_per_goal: int,
               planner_params: NoisyHeuristicParams, seed: int) -> list[tuple[int, Path]]:
    """n noisy paths per goal as (goal index, path) pairs, goal-major order."""
    pairs = []
    for g in range(N_GOALS):
        for p in range(n_paths_per_goal):
            params = NoisyHeuristicParams(
                planner_params.epsilon, planner_params.delta,
                child_seed(_PATH_TAG, seed, g, p),
            )
            pairs.append((g, astar_noisy(scenario.map, scenario.start,
                                         scenario.goals[g], params)))
    return pairs


def generate(spec: DatasetSpec) -> list[Example]:
    """Goal-balanced examples: one per (path, observability), shuffled by seed."""
    examples = []
    pairs = plan_paths(spec.scenario, spec.n_paths_per_goal, spec.planner_params, spec.seed)
    for path_id, (goal, path) in enumerate(pairs):
        for obs in spec.observabilities:
            bitmap = encode(spec.scenario, truncate(path, obs))
            examples.append(Example(bitmap, goal, obs, path_id))
    rng = np.random.default_rng([_SHUFFLE_TAG, spec.seed])
    return [examples[i] for i in rng.permutation(len(examples))]


def make_shots(scenario: Scenario, n: int, planner_params: NoisyHeuristicParams,
               seed: int) -> list[Example]:
    """n shots = 4 * n * 10 examples: per shot, one fresh noisy path per goal,
    truncated at each of the four observability levels."""
    if n < 0:
        raise DatasetError(f"shot count must be >= 0, got {n}")
    examples = []
    for k in range(n):
        for g in range(N_GOALS):
            params = NoisyHeuristicParams(
                planner_params.epsilon, planner_params.delta,
                child_seed(_SHOT_TAG, seed, k, g),
            )
            path = astar_noisy(scenario.map, scenario.start, scenario.goals[g], params)
            for obs in OBSERVABILITIES:
                examples.append(Example(encode(scenario, truncate(path, obs)),
                                        g, obs, k * N_GOALS + g))
    return examples


def save(examples: list[Example]) -> bytes:
    """Serialize to the GRD1 container (header 10 bytes, then 6 + N*N per example)."""
    size = examples[0].bitmap.size if examples else 0
    chunks = [_HEADER.pack(GRD_MAGIC, size, len(examples))]
    for ex in examples:
        if ex.bitmap.size != size:
            raise FormatError(f"mixed bitmap sizes {ex.bitmap.size} vs {size}")
        if ex.observability not in OBSERVABILITIES:
            raise FormatError(
                f"stored sets require observability in {OBSERVABILITIES}, got {ex.observability}")
        chunks.append(_EXAMPLE.pack(ex.label, ex.observability, ex.path_id))
        chunks.append(ex.bitmap.index.tobytes())
    return b"".join(chunks)


def load(data: bytes) -> list[Example]:
    """Parse a GRD1 container; validates magic, sizes, and channel bytes."""
    if len(data) < _HEADER.size:
        raise FormatError(f"truncated header: {len(data)} bytes")
    magic, size, count = _HEADER.unpack_from(data, 0)
    if magic != GRD_MAGIC:
        raise FormatError(f"bad magic/version {magic!r}, expected {GRD_MAGIC!r}")
    stride = _EXAMPLE.size + size * size
    expected = _HEADER.size + count * stride
    if len(data) != expected:
        raise FormatError(f"payload is {len(data)} bytes, expected {expected}")
    examples = []
    offset = _HEADER.size
    for _ in range(count):
        label, obs, path_id = _EXAMPLE.unpack_from(data, offset)
        offset += _EXAMPLE.size
        cells = np.frombuffer(data, dtype=np.uint8, count=size * size, offset=offset)
        offset += size * size
        if label >= N_GOALS:
            raise FormatError(f"label byte {label} out of range")
        if obs not in OBSERVABILITIES:
            raise FormatError(f"observability byte {obs} out of range")
        if cells.size and cells.max() >= N_CHANNELS:
            raise FormatError(f"channel-index byte {int(cells.max())} out of range")
        examples.append(Example(TrailBitmap(cells.reshape(size, size)), label, obs, path_id))
    return examples


def save_file(examples: list[Example], path) -> bytes:
    data = save(examples)
    with open(path, "wb") as fh:
        fh.write(data)
    return data


def load_file(path) -> list[Example]:
    with open(path, "rb") as fh:
        return load(fh.read())
