"""Five-channel stacked spatial-trail bitmaps and PPM rendering.

Each cell carries exactly one channel, assigned by cascade precedence:
obstacle > observation > start > goal > free. The trail therefore hides a
goal marker it passes over (including the true goal at full observability);
set goal_precedence="high" to lift goals above the trail for ablations.
"""

from __future__ import annotations

import numpy as np

from .gridworld import Scenario

CH_OBSTACLE = 0
CH_OBSERVATION = 1
CH_START = 2
CH_GOAL = 3
CH_FREE = 4
N_CHANNELS = 5

# Fig-style palette: wall black, observation white, start red, goal green, free gray.
PALETTE = np.array(
    [(0, 0, 0), (255, 255, 255), (255, 0, 0), (0, 255, 0), (128, 128, 128)],
    dtype=np.uint8,
)


class EncodeError(ValueError):
    """Invalid observation cells or bitmap payload."""


class TrailBitmap:
    """N x N grid of channel indices; one-hot across channels by construction."""

    __slots__ = ("size", "index")

    def __init__(self, index):
        arr = np.array(index, dtype=np.uint8)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.size == 0:
            raise EncodeError(f"bitmap must be square and non-empty, got shape {arr.shape}")
        if arr.max() >= N_CHANNELS:
            raise EncodeError(f"channel index out of range 0..{N_CHANNELS - 1}")
        arr.setflags(write=False)
        self.index = arr
        self.size = int(arr.shape[0])

    def planes(self, dtype=np.float32) -> np.ndarray:
        """One-hot channel planes, shape (5, N, N)."""
        return (self.index[None, :, :] ==
                np.arange(N_CHANNELS, dtype=np.uint8)[:, None, None]).astype(dtype)

    def channel_counts(self) -> np.ndarray:
        return np.bincount(self.index.ravel(), minlength=N_CHANNELS)

    def __eq__(self, other):
        if not isinstance(other, TrailBitmap):
            return NotImplemented
        return self.size == other.size and bool(np.array_equal(self.index, other.index))

    __hash__ = None

    def __repr__(self):
        return f"TrailBitmap({self.size}x{self.size})"


def encode(scenario: Scenario, observations, goal_precedence: str = "low") -> TrailBitmap:
    """Project a scenario and its observation cells into a TrailBitmap."""
    grid = scenario.map
    if grid.width != grid.height:
        raise EncodeError(f"map must be square to encode, got {grid.width}x{grid.height}")
    if goal_precedence not in ("low", "high"):
        raise ValueError(f"goal_precedence must be 'low' or 'high', got {goal_precedence!r}")
    for x, y in observations:
        if not grid.in_bounds(x, y):
            raise EncodeError(f"observation {(x, y)} is out of bounds")
        if not grid.is_free(x, y):
            raise EncodeError(f"observation {(x, y)} lies on a blocked cell")

    index = np.full((grid.height, grid.width), CH_FREE, dtype=np.uint8)
    # painting in reverse precedence order realizes the cascade
    if goal_precedence == "low":
        layers = ((scenario.goals, CH_GOAL), ((scenario.start,), CH_START),
                  (observations, CH_OBSERVATION))
    else:
        layers = (((scenario.start,), CH_START), (observations, CH_OBSERVATION),
                  (scenario.goals, CH_GOAL))
    for cells, channel in layers:
        for x, y in cells:
            index[y, x] = channel
    index[grid.blocked] = CH_OBSTACLE
    return TrailBitmap(index)


def render_ppm(bitmap: TrailBitmap) -> bytes:
    """Binary PPM (P6) with the fixed five-color palette."""
    n = bitmap.size
    header = f"P6\n{n} {n}\n255\n".encode("ascii")
    return header + PALETTE[bitmap.index].tobytes()
