"""Noisy near-optimal planning and observation prefixes.

The planner is A* with a per-node trick: each node's Manhattan heuristic is
kept admissible with probability 1 - epsilon and inflated by delta otherwise
(memoized per search). Paths stay valid but detour like a human-steered
route would.
"""

import numpy as np

import trailrec as tr

grid = tr.generate_map(32, seed=5)
scenario = tr.sample_scenario(grid, rng_seed=1)
start, goal = scenario.start, scenario.goal_cell

optimal = tr.astar_noisy(grid, start, goal, tr.NoisyHeuristicParams(0.0, 10.0, 0))
print(f"optimal cost {optimal.cost} from {start} to {goal}")

costs = []
for seed in range(20):
    noisy = tr.astar_noisy(grid, start, goal,
                           tr.NoisyHeuristicParams(0.2, 10.0, seed))
    costs.append(noisy.cost)
print(f"noisy costs over 20 seeds: min {min(costs)}, "
      f"mean {np.mean(costs):.1f}, max {max(costs)} (never below optimal)")
assert min(costs) >= optimal.cost

# The same seed always replays the same path.
a = tr.astar_noisy(grid, start, goal, tr.NoisyHeuristicParams(0.2, 10.0, 9))
b = tr.astar_noisy(grid, start, goal, tr.NoisyHeuristicParams(0.2, 10.0, 9))
assert a == b

# Observability prefixes keep the FIRST x% of the path (round half up,
# never fewer than one cell), so predictions can be made online.
path = a
for fraction in (25, 50, 75, 100):
    prefix = tr.truncate(path, fraction)
    print(f"{fraction:>3}% observability: {len(prefix):>3} of "
          f"{len(path.cells)} cells, ends at {prefix[-1]}")
