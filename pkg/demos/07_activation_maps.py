"""Per-filter activation maps, the qualitative cross-domain-feature check.

Early layers respond to walls, free space, and trail fragments; late layers
concentrate on the trail and candidate goals. Dumps 16 PGM images per layer,
min-max normalized so the layer minimum maps to 0 and the maximum to 255.
"""

from pathlib import Path

import trailrec as tr
from trailrec import harness
from trailrec import recognizer as rec

out = Path(__file__).parent / "out" / "activations"

params = tr.NoisyHeuristicParams(0.2, 10.0, 0)
grid = tr.generate_map(32, seed=5)
scenario = tr.sample_scenario(grid, rng_seed=1)
train = tr.generate(tr.DatasetSpec(scenario, 25, params, seed=10))
net = rec.Network(32, seed=0)
net, _ = rec.train_base(net, train, epochs=5)

path = tr.astar_noisy(grid, scenario.start, scenario.goal_cell,
                      tr.NoisyHeuristicParams(0.2, 10.0, 8))
bitmap = tr.encode(scenario, tr.truncate(path, 75))
(out.parent / "activation_input.ppm").parent.mkdir(parents=True, exist_ok=True)
(out.parent / "activation_input.ppm").write_bytes(tr.render_ppm(bitmap))

for layer in (1, 4, 7):
    maps = harness.activation_maps(net, bitmap, layer)
    paths = harness.dump_activations(net, bitmap, layer, out)
    print(f"layer {layer}: 16 filters at {maps.shape[1]}x{maps.shape[2]}, "
          f"activation range [{maps.min():.2f}, {maps.max():.2f}], "
          f"wrote {len(paths)} PGMs")
print(f"input rendered to {out.parent / 'activation_input.ppm'}; "
      f"filter maps under {out}")
