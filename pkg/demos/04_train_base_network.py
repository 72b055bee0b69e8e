"""Train a base network on one fixed scenario (reduced scale, ~1 minute).

The architecture is seven conv blocks (16 filters of 3x3, batch norm, ReLU,
dropout 0.1) and a dense 10-way softmax head, optimized with Adam at lr 0.01.
Stride is 2 while the spatial side exceeds 4, so the head always sees
16 * 4 * 4 = 256 features.

The full desk-scale protocol (64x64, 2000 train / 800 test, 5 epochs) runs in
the acceptance suite; this demo uses a 32x32 map and fewer paths to stay fast.
"""

from pathlib import Path

import trailrec as tr
from trailrec import recognizer as rec

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

grid = tr.generate_map(32, seed=5)
scenario = tr.sample_scenario(grid, rng_seed=1)
params = tr.NoisyHeuristicParams(0.2, 10.0, 0)

train = tr.generate(tr.DatasetSpec(scenario, 25, params, seed=10))  # 1000 examples
test = tr.generate(tr.DatasetSpec(scenario, 10, params, seed=20))   # 400 examples
print(f"train {len(train)} / test {len(test)} examples on {grid.name}")

net = rec.Network(32, seed=0)
print("untrained accuracy (chance is 0.10):",
      {k: round(v, 3) for k, v in rec.evaluate(net, test).items()})

net, losses = rec.train_base(net, train, epochs=5)
print("per-epoch mean loss:", [round(l, 3) for l in losses])

accs = rec.evaluate(net, test)
print("accuracy by observability:", {k: round(v, 3) for k, v in accs.items()})
print("more of the path observed means a more confident recognizer:",
      accs[100] > accs[25])

ckpt = out / "demo_base.nnw"
rec.save_checkpoint(net, ckpt)
print(f"wrote {ckpt} ({ckpt.stat().st_size} bytes); "
      f"reload reproduces accuracy exactly:",
      rec.evaluate(rec.load_checkpoint(ckpt), test) == accs)
