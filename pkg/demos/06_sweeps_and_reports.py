"""Hyperparameter sweeps with 5-map cross-validation and CSV/SVG reports.

Each sweep adapts the base network once per (value, transfer map) cell and
averages accuracy per observability over the five maps. The single-map
baseline rides along as the dashed series in every chart. This demo sweeps
a reduced shot grid at 16x16 to finish quickly; the acceptance suite runs
the full grids at desk scale.
"""

from pathlib import Path

import trailrec as tr
from trailrec import harness
from trailrec import recognizer as rec

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

params = tr.NoisyHeuristicParams(0.2, 10.0, 0)

base_grid = tr.generate_map(16, seed=5)
base_scenario = tr.sample_scenario(base_grid, rng_seed=1)
train = tr.generate(tr.DatasetSpec(base_scenario, 15, params, seed=10))
test = tr.generate(tr.DatasetSpec(base_scenario, 6, params, seed=20))
net = rec.Network(16, seed=0)
net, _ = rec.train_base(net, train, epochs=3)
baseline = rec.evaluate(net, test, seed=0)
print("baseline:", {k: round(v, 3) for k, v in baseline.items()})

scenarios = [tr.sample_scenario(tr.generate_map(16, seed=100 + i), rng_seed=2 + i)
             for i in range(5)]

report = harness.sweep_shots(net, scenarios, planner_params=params, seed=7,
                             baseline=baseline, values=(0, 1, 5),
                             n_val_paths_per_goal=4)
for value in report.values:
    row = {obs: round(report.means[(value, obs)], 3)
           for obs in report.observabilities}
    print(f"shots={value}: {row}")

csv_path, svg_path = harness.emit_report(report, out)
print(f"wrote {csv_path}")
print(f"wrote {svg_path} (open in a browser; baseline is the dashed line)")
