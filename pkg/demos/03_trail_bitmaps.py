"""The 5-channel stacked-trail encoding.

A trajectory is projected onto the map as a spatial trail, so a plain CNN
can read temporal behavior from a single bitmap. Channel per cell, by
cascade precedence: obstacle > observation > start > goal > free.
"""

from pathlib import Path

import trailrec as tr
from trailrec.encoder import (CH_FREE, CH_GOAL, CH_OBSERVATION, CH_OBSTACLE,
                              CH_START)

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

grid = tr.generate_map(64, seed=7)
scenario = tr.sample_scenario(grid, rng_seed=3)
path = tr.astar_noisy(grid, scenario.start, scenario.goal_cell,
                      tr.NoisyHeuristicParams(0.2, 10.0, 4))

names = {CH_OBSTACLE: "obstacle", CH_OBSERVATION: "observation",
         CH_START: "start", CH_GOAL: "goal", CH_FREE: "free"}

for fraction in (25, 75, 100):
    trail = tr.truncate(path, fraction)
    bitmap = tr.encode(scenario, trail)
    counts = bitmap.channel_counts()
    summary = ", ".join(f"{names[c]}={counts[c]}" for c in range(5))
    print(f"{fraction:>3}%: {summary}")
    (out / f"trail_{fraction}.ppm").write_bytes(tr.render_ppm(bitmap))

# At 100% the trail covers the true goal cell, so its green marker vanishes
# (observations outrank goals in the cascade). Ablate with
# goal_precedence="high" to keep goal markers on top.
full = tr.truncate(path, 100)
faithful = tr.encode(scenario, full)
ablated = tr.encode(scenario, full, goal_precedence="high")
gx, gy = scenario.goal_cell
print(f"true goal cell at 100%: channel {names[int(faithful.index[gy, gx])]} "
      f"(faithful) vs {names[int(ablated.index[gy, gx])]} (goal_precedence=high)")

# The planes() view is what the network consumes: 5 one-hot planes.
planes = faithful.planes()
print(f"network input shape: {planes.shape}, every cell one-hot:",
      bool((planes.sum(axis=0) == 1).all()))
print(f"wrote trail_25/75/100.ppm under {out}")
