"""Command-line interface.

Verbs: gen-maps, gen-data, train-base, adapt, eval, sweep {frozen|shots|lr},
activations, render. Global flags (--seed, --grid-size, --config, --out) come
before the verb; a --config file holds flat key=value defaults that explicit
flags override. On failure the process exits nonzero after printing a single
"error category=<cat> detail=<text>" line to stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import dataset as ds
from . import harness, recognizer as rec
from .encoder import EncodeError, encode, render_ppm
from .gridworld import (MapError, ScenarioError, generate_map, parse_movingai,
                        parse_scenario, sample_scenario, serialize_scenario,
                        to_movingai)
from .harness import HarnessError
from .nn import NNError
from .planner import NoisyHeuristicParams, PlannerError

_GEN_MAP_TAG = 151
_SCENARIO_TAG = 152
_DATA_TAG = 153
_SHOT_TAG = 154
_BASELINE_EVAL_TAG = 155

_DEFAULTS = {
    "seed": 0,
    "grid_size": 64,
    "out": "out",
    "count": 6,
    "density": 0.38,
    "smooth": 3,
    "paths_per_goal": 50,
    "epsilon": 0.2,
    "delta": 10.0,
    "epochs": 5,
    "lr": 0.01,
    "batch": 32,
    "shots": 5,
    "frozen": 5,
    "index": 0,
    "val_paths_per_goal": harness.VAL_PATHS_PER_GOAL,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trailrec",
        description="goal recognition on grid-world trails with few-shot transfer")
    parser.add_argument("--seed", type=int, default=None, help="master rng seed")
    parser.add_argument("--grid-size", type=int, default=None,
                        help="square map side (power of two)")
    parser.add_argument("--config", type=str, default=None,
                        help="flat key=value config file supplying defaults")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-maps", help="generate synthetic MovingAI map files")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--density", type=float, default=None)
    p.add_argument("--smooth", type=int, default=None)

    p = sub.add_parser("gen-data", help="sample a scenario and generate a GRD1 dataset")
    p.add_argument("--map", default=None, help="MovingAI .map file (or map= in --config)")
    p.add_argument("--scenario", default=None, help="existing scenario file to reuse")
    p.add_argument("--paths-per-goal", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--data-out", default=None, help="output .grd path")
    p.add_argument("--scenario-out", default=None, help="output .scn path")

    p = sub.add_parser("train-base", help="train the base network on a GRD1 dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--plain", action="store_true",
                   help="plain conv+ReLU blocks (no batch norm / dropout)")
    p.add_argument("--ckpt-out", default=None)

    p = sub.add_parser("adapt", help="few-shot adapt a base checkpoint to a new map")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--scenario", default=None)
    p.add_argument("--shots", type=int, default=None)
    p.add_argument("--frozen", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--ckpt-out", default=None)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a GRD1 dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--prefix-grid", default=None,
                   help="comma percentages; re-truncates fresh paths at each")
    p.add_argument("--map", default=None)
    p.add_argument("--scenario", default=None)
    p.add_argument("--paths-per-goal", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)

    p = sub.add_parser("sweep", help="run a hyperparameter sweep over 5 transfer maps")
    p.add_argument("axis", choices=("frozen", "shots", "lr"))
    p.add_argument("--ckpt", required=True)
    p.add_argument("--maps", required=True,
                   help="comma-separated list of 5 transfer .map files")
    p.add_argument("--baseline-data", required=True,
                   help="base-test GRD1 for the dashed baseline series")
    p.add_argument("--values", default=None, help="comma-separated swept values")
    p.add_argument("--shots", type=int, default=None)
    p.add_argument("--frozen", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--val-paths-per-goal", type=int, default=None)

    p = sub.add_parser("activations", help="dump per-filter activation maps as PGM")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=None)
    p.add_argument("--layer", default="all", help="1..7 or 'all'")

    p = sub.add_parser("render", help="render an example or scenario as PPM")
    p.add_argument("--data", default=None)
    p.add_argument("--index", type=int, default=None)
    p.add_argument("--map", default=None)
    p.add_argument("--scenario", default=None)
    p.add_argument("--ppm-out", default=None)
    return parser


def _read_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    return harness.read_metadata(path)


class _Options:
    """Layered option lookup: explicit CLI flag, then config file, then default."""

    def __init__(self, args: argparse.Namespace, config: dict[str, str]):
        self.args = args
        self.config = config

    def get(self, key: str, cast=str, default=None):
        value = getattr(self.args, key, None)
        if value is not None:
            return value
        if key in self.config:
            return cast(self.config[key])
        if default is not None:
            return default
        if key in _DEFAULTS:
            return _DEFAULTS[key]
        raise ValueError(f"missing required option {key!r}")


def _load_map(path: str):
    text = Path(path).read_text(encoding="utf-8")
    return parse_movingai(text, name=Path(path).stem)


def _load_scenario(opt: _Options, grid, scenario_path: str | None, seed: int):
    if scenario_path is not None:
        return parse_scenario(Path(scenario_path).read_text(encoding="utf-8"), grid)
    return sample_scenario(grid, ds.child_seed(_SCENARIO_TAG, seed))


def _planner_params(opt: _Options, seed: int) -> NoisyHeuristicParams:
    return NoisyHeuristicParams(opt.get("epsilon", float), opt.get("delta", float), seed)


def cmd_gen_maps(opt: _Options) -> int:
    out = Path(opt.get("out"))
    out.mkdir(parents=True, exist_ok=True)
    seed = opt.get("seed", int)
    size = opt.get("grid_size", int)
    for i in range(opt.get("count", int)):
        grid = generate_map(size, ds.child_seed(_GEN_MAP_TAG, seed, i),
                            density=opt.get("density", float),
                            smooth_steps=opt.get("smooth", int),
                            name=f"map_{i:02d}")
        path = out / f"map_{i:02d}.map"
        path.write_text(to_movingai(grid), encoding="ascii")
        print(f"wrote {path}")
    return 0


def cmd_gen_data(opt: _Options) -> int:
    # the whole dataset spec may come from flat key=value config text
    out = Path(opt.get("out"))
    out.mkdir(parents=True, exist_ok=True)
    seed = opt.get("seed", int)
    grid = _load_map(opt.get("map"))
    scenario = _load_scenario(opt, grid, opt.args.scenario or opt.config.get("scenario"),
                              seed)
    spec = ds.DatasetSpec(scenario, opt.get("paths_per_goal", int),
                          _planner_params(opt, seed),
                          ds.child_seed(_DATA_TAG, seed))
    examples = ds.generate(spec)
    data_path = Path(opt.get("data_out", default=str(out / "data.grd")))
    scn_path = Path(opt.get("scenario_out", default=str(out / "scenario.scn")))
    data = ds.save_file(examples, data_path)
    scn_path.write_text(serialize_scenario(scenario), encoding="ascii")
    print(f"wrote {data_path} examples={len(examples)} sha256={harness.sha256_hex(data)}")
    print(f"wrote {scn_path}")
    return 0


def cmd_train_base(opt: _Options) -> int:
    out = Path(opt.get("out"))
    out.mkdir(parents=True, exist_ok=True)
    seed = opt.get("seed", int)
    examples = ds.load_file(opt.args.data)
    if not examples:
        raise ds.DatasetError("training dataset is empty")
    net = rec.Network(examples[0].bitmap.size, seed, plain=opt.args.plain)
    epochs = opt.get("epochs", int)
    lr = opt.get("lr", float)
    batch = opt.get("batch", int)
    net, losses = rec.train_base(net, examples, epochs=epochs, lr=lr, batch_size=batch)
    ckpt_path = Path(opt.get("ckpt_out", default=str(out / "base.nnw")))
    data = rec.save_checkpoint(net, ckpt_path)
    meta = {
        "command": "train-base", "seed": seed, "epochs": epochs, "lr": lr,
        "batch": batch, "plain": int(opt.args.plain),
        "train_data_sha256": harness.sha256_hex(Path(opt.args.data).read_bytes()),
        "checkpoint_sha256": harness.sha256_hex(data),
        "adam_beta1": 0.9, "adam_beta2": 0.999, "adam_eps": 1e-8,
        "bn_eps": 1e-5, "bn_momentum": 0.1,
    }
    for i, loss in enumerate(losses):
        meta[f"loss_epoch{i}"] = f"{loss:.17g}"
    harness.write_metadata(f"{ckpt_path}.meta", meta)
    print(f"wrote {ckpt_path} final_loss={losses[-1]:.6f}")
    return 0


def cmd_adapt(opt: _Options) -> int:
    out = Path(opt.get("out"))
    out.mkdir(parents=True, exist_ok=True)
    seed = opt.get("seed", int)
    net = rec.load_checkpoint(opt.args.ckpt)
    grid = _load_map(opt.args.map)
    scenario = _load_scenario(opt, grid, opt.args.scenario, seed)
    cfg = rec.TransferConfig(opt.get("frozen", int), opt.get("shots", int),
                             opt.get("lr", float))
    shots = ds.make_shots(scenario, cfg.shots, _planner_params(opt, seed),
                          ds.child_seed(_SHOT_TAG, seed))
    adapted = rec.adapt(net, cfg, shots)
    ckpt_path = Path(opt.get("ckpt_out", default=str(out / "adapted.nnw")))
    data = rec.save_checkpoint(adapted, ckpt_path)
    harness.write_metadata(f"{ckpt_path}.meta", {
        "command": "adapt", "seed": seed, "base_ckpt": opt.args.ckpt,
        "map": grid.name, "shots": cfg.shots, "frozen": cfg.frozen_blocks,
        "transfer_lr": cfg.transfer_lr, "epochs": cfg.epochs,
        "adapt_batch": rec.ADAPT_BATCH,
        "checkpoint_sha256": harness.sha256_hex(data),
    })
    print(f"wrote {ckpt_path} shots={cfg.shots} frozen={cfg.frozen_blocks}")
    return 0


def cmd_eval(opt: _Options) -> int:
    seed = opt.get("seed", int)
    net = rec.load_checkpoint(opt.args.ckpt)
    if opt.args.prefix_grid is not None:
        if opt.args.map is None:
            raise ValueError("--prefix-grid needs --map (and optionally --scenario)")
        grid = _load_map(opt.args.map)
        scenario = _load_scenario(opt, grid, opt.args.scenario, seed)
        pcts = [float(v) for v in opt.args.prefix_grid.split(",")]
        paths = ds.plan_paths(scenario, opt.get("paths_per_goal", int, default=20),
                              _planner_params(opt, seed), ds.child_seed(_DATA_TAG, seed))
        accs = rec.evaluate(net, [], prefix_grid=pcts, scenario=scenario,
                            paths=paths, seed=seed)
        for pct in pcts:
            print(f"accuracy_{pct:g}={accs[pct]:.6f}")
        return 0
    if opt.args.data is None:
        raise ValueError("eval needs --data (or --prefix-grid with --map)")
    examples = ds.load_file(opt.args.data)
    accs = rec.evaluate(net, examples, seed=seed)
    for obs in sorted(accs):
        print(f"accuracy_{obs}={accs[obs]:.6f}")
    return 0


def _parse_values(axis: str, text: str | None):
    if text is None:
        return {"frozen": harness.FROZEN_VALUES, "shots": harness.SHOT_VALUES,
                "lr": harness.LR_VALUES}[axis]
    if axis == "lr":
        return tuple(float(v) for v in text.split(","))
    return tuple(int(v) for v in text.split(","))


def cmd_sweep(opt: _Options) -> int:
    out = Path(opt.get("out"))
    out.mkdir(parents=True, exist_ok=True)
    seed = opt.get("seed", int)
    net = rec.load_checkpoint(opt.args.ckpt)
    map_paths = [p for p in opt.args.maps.split(",") if p]
    if len(map_paths) != harness.N_TRANSFER_MAPS:
        raise HarnessError(f"sweep needs exactly {harness.N_TRANSFER_MAPS} maps, "
                           f"got {len(map_paths)}")
    scenarios = []
    for i, path in enumerate(map_paths):
        grid = _load_map(path)
        scenarios.append(sample_scenario(grid, ds.child_seed(_SCENARIO_TAG, seed, i)))
    base_test = ds.load_file(opt.args.baseline_data)
    baseline = rec.evaluate(net, base_test, seed=ds.child_seed(_BASELINE_EVAL_TAG, seed))
    params = _planner_params(opt, seed)
    values = _parse_values(opt.args.axis, opt.args.values)
    common = dict(planner_params=params, seed=seed, baseline=baseline, values=values,
                  n_val_paths_per_goal=opt.get("val_paths_per_goal", int))
    if opt.args.axis == "frozen":
        report = harness.sweep_frozen(net, scenarios, shots=opt.get("shots", int),
                                      lr=opt.get("lr", float), **common)
    elif opt.args.axis == "shots":
        report = harness.sweep_shots(net, scenarios, frozen=opt.get("frozen", int),
                                     lr=opt.get("lr", float), **common)
    else:
        report = harness.sweep_lr(net, scenarios, frozen=opt.get("frozen", int, default=4),
                                  shots=opt.get("shots", int), **common)
    csv_path, svg_path = harness.emit_report(report, out)
    meta = {"command": "sweep", "axis": report.axis, "seed": seed,
            "base_ckpt": opt.args.ckpt,
            "values": ",".join(harness._fmt_value(v) for v in report.values)}
    for i, name in enumerate(report.map_names):
        meta[f"map{i}"] = name
        meta[f"val_sha256_{i}"] = report.dataset_hashes[i]
    harness.write_metadata(out / f"{report.axis}.meta", meta)
    print(f"wrote {csv_path}")
    print(f"wrote {svg_path}")
    return 0


def cmd_activations(opt: _Options) -> int:
    out = Path(opt.get("out"))
    net = rec.load_checkpoint(opt.args.ckpt)
    examples = ds.load_file(opt.args.data)
    index = opt.get("index", int)
    if not (0 <= index < len(examples)):
        raise ValueError(f"index {index} out of range for {len(examples)} examples")
    layers = (range(1, rec.N_BLOCKS + 1) if opt.args.layer == "all"
              else [int(opt.args.layer)])
    for layer in layers:
        paths = harness.dump_activations(net, examples[index].bitmap, layer, out)
        print(f"wrote {len(paths)} maps for layer {layer} under {out}")
    return 0


def cmd_render(opt: _Options) -> int:
    out = Path(opt.get("out"))
    out.mkdir(parents=True, exist_ok=True)
    if (opt.args.data is None) == (opt.args.map is None):
        raise ValueError("render needs exactly one of --data or --map")
    if opt.args.data is not None:
        examples = ds.load_file(opt.args.data)
        index = opt.get("index", int)
        if not (0 <= index < len(examples)):
            raise ValueError(f"index {index} out of range for {len(examples)} examples")
        bitmap = examples[index].bitmap
        default_name = f"example_{index:05d}.ppm"
    else:
        grid = _load_map(opt.args.map)
        scenario = _load_scenario(opt, grid, opt.args.scenario, opt.get("seed", int))
        bitmap = encode(scenario, [])
        default_name = f"{grid.name}.ppm"
    path = Path(opt.get("ppm_out", default=str(out / default_name)))
    path.write_bytes(render_ppm(bitmap))
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "gen-maps": cmd_gen_maps,
    "gen-data": cmd_gen_data,
    "train-base": cmd_train_base,
    "adapt": cmd_adapt,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "activations": cmd_activations,
    "render": cmd_render,
}

_CATEGORIES = (
    (MapError, "map"),
    (ScenarioError, "scenario"),
    (PlannerError, "planner"),
    (EncodeError, "encode"),
    (ds.FormatError, "format"),
    (ds.DatasetError, "dataset"),
    (NNError, "nn"),
    (rec.RecognizerError, "recognizer"),
    (HarnessError, "harness"),
    (FileNotFoundError, "io"),
    (OSError, "io"),
    (ValueError, "usage"),
)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        opt = _Options(args, _read_config(args.config))
        return _COMMANDS[args.command](opt)
    except Exception as exc:  # single-line machine-parsable failure report
        category = "internal"
        for cls, cat in _CATEGORIES:
            if isinstance(exc, cls):
                category = cat
                break
        detail = " ".join(str(exc).split())
        print(f"error category={category} detail={detail}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
