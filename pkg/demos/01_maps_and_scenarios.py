"""Maps and scenarios: generate, parse, downscale, sample, render.

Run from the repository root:  python3 demos/01_maps_and_scenarios.py
Outputs land in demos/out/.
"""

from pathlib import Path

import trailrec as tr

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

# A synthetic cave-style occupancy grid. Everything is seeded, so this map
# is the same on every run.
grid = tr.generate_map(64, seed=7)
print(f"generated {grid}: {grid.blocked_count()} blocked cells "
      f"({grid.blocked_count() / grid.width / grid.height:.0%})")

# Maps serialize to the MovingAI text format and parse back identically.
text = tr.to_movingai(grid)
print("MovingAI header:", text.splitlines()[:4])
assert tr.parse_movingai(text) == grid

# Downscaling pools conservatively: a target cell is blocked if any covered
# source cell is, so downscaled paths never cross true obstacles.
small = tr.downscale(grid, 16)
print(f"downscaled to {small}: {small.blocked_count()} blocked cells")

# A scenario fixes a start, ten candidate goals, and the true goal, all
# sampled from the largest connected free region.
scenario = tr.sample_scenario(grid, rng_seed=3)
print(f"start {scenario.start}, true goal index {scenario.true_goal} "
      f"at {scenario.goal_cell}")
print("scenario file:")
print(tr.serialize_scenario(scenario))

# Render the empty scenario (no observations yet): red start, green goals,
# black walls, gray free space.
ppm = tr.render_ppm(tr.encode(scenario, []))
(out / "scenario.ppm").write_bytes(ppm)
print(f"wrote {out / 'scenario.ppm'} ({len(ppm)} bytes)")
