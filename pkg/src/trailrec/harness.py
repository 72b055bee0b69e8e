"""Experiment orchestration: hyperparameter sweeps cross-validated over five
transfer maps, activation-map dumps, and CSV/SVG report emission."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import dataset as ds
from . import nn
from . import recognizer as rec
from .dataset import OBSERVABILITIES, DatasetSpec, child_seed, generate, make_shots
from .encoder import TrailBitmap
from .gridworld import Scenario
from .planner import NoisyHeuristicParams

FROZEN_VALUES = (0, 1, 2, 3, 4, 5, 6)
SHOT_VALUES = tuple(range(11))
LR_VALUES = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
N_TRANSFER_MAPS = 5
VAL_PATHS_PER_GOAL = 10  # 10 goals x 10 paths x 4 observabilities = 400 per map

_VAL_TAG = 141
_SHOTSET_TAG = 142
_VAL_EVAL_TAG = 143

_SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                  "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f", "#aec7e8")


class HarnessError(ValueError):
    """Invalid sweep or report request."""


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class SweepReport:
    """Per-(value, map, observability) accuracy plus across-map means and the
    single-map baseline curve shared by all sweeps of a run."""

    axis: str
    values: tuple
    observabilities: tuple[int, ...]
    map_names: tuple[str, ...]
    cells: dict          # (value, map_index, observability) -> accuracy
    means: dict          # (value, observability) -> mean accuracy over maps
    baseline: dict       # observability -> accuracy
    seed: int
    dataset_hashes: dict  # map_index -> sha256 of the validation GRD1 bytes

    def __post_init__(self):
        if len(self.map_names) != N_TRANSFER_MAPS:
            raise HarnessError(f"reports aggregate exactly {N_TRANSFER_MAPS} maps, "
                               f"got {len(self.map_names)}")
        for acc in (*self.cells.values(), *self.means.values(), *self.baseline.values()):
            if not (0.0 <= acc <= 1.0):
                raise HarnessError(f"accuracy {acc} outside [0, 1]")


def _run_sweep(axis: str, base_net: rec.Network, scenarios: list[Scenario],
               value_cfgs, planner_params: NoisyHeuristicParams, seed: int,
               baseline: dict, n_val_paths_per_goal: int, progress=None) -> SweepReport:
    if len(scenarios) != N_TRANSFER_MAPS:
        raise HarnessError(f"need exactly {N_TRANSFER_MAPS} transfer scenarios, "
                           f"got {len(scenarios)}")
    val_sets, hashes = [], {}
    for i, scenario in enumerate(scenarios):
        val = generate(DatasetSpec(scenario, n_val_paths_per_goal, planner_params,
                                   child_seed(_VAL_TAG, seed, i)))
        hashes[i] = sha256_hex(ds.save(val))
        val_sets.append(val)

    shot_cache: dict[tuple[int, int], list] = {}
    cells, means = {}, {}
    for value, cfg in value_cfgs:
        for i, scenario in enumerate(scenarios):
            key = (i, cfg.shots)
            if key not in shot_cache:
                shot_cache[key] = make_shots(scenario, cfg.shots, planner_params,
                                             child_seed(_SHOTSET_TAG, seed, i, cfg.shots))
            adapted = rec.adapt(base_net, cfg, shot_cache[key])
            accs = rec.evaluate(adapted, val_sets[i],
                                seed=child_seed(_VAL_EVAL_TAG, seed, i))
            for obs in OBSERVABILITIES:
                cells[(value, i, obs)] = accs[obs]
            if progress is not None:
                progress(axis, value, i)
        for obs in OBSERVABILITIES:
            means[(value, obs)] = sum(cells[(value, i, obs)]
                                      for i in range(N_TRANSFER_MAPS)) / N_TRANSFER_MAPS
    return SweepReport(axis, tuple(v for v, _ in value_cfgs), OBSERVABILITIES,
                       tuple(s.map.name for s in scenarios), cells, means,
                       dict(baseline), seed, hashes)


def sweep_frozen(base_net: rec.Network, scenarios: list[Scenario], *,
                 planner_params: NoisyHeuristicParams, seed: int, baseline: dict,
                 shots: int = 5, lr: float = 0.01, values=FROZEN_VALUES,
                 n_val_paths_per_goal: int = VAL_PATHS_PER_GOAL, progress=None) -> SweepReport:
    cfgs = [(v, rec.TransferConfig(v, shots, lr)) for v in values]
    return _run_sweep("frozen", base_net, scenarios, cfgs, planner_params, seed,
                      baseline, n_val_paths_per_goal, progress)


def sweep_shots(base_net: rec.Network, scenarios: list[Scenario], *,
                planner_params: NoisyHeuristicParams, seed: int, baseline: dict,
                frozen: int = 5, lr: float = 0.01, values=SHOT_VALUES,
                n_val_paths_per_goal: int = VAL_PATHS_PER_GOAL, progress=None) -> SweepReport:
    cfgs = [(n, rec.TransferConfig(frozen, n, lr)) for n in values]
    return _run_sweep("shots", base_net, scenarios, cfgs, planner_params, seed,
                      baseline, n_val_paths_per_goal, progress)


def sweep_lr(base_net: rec.Network, scenarios: list[Scenario], *,
             planner_params: NoisyHeuristicParams, seed: int, baseline: dict,
             frozen: int = 4, shots: int = 5, values=LR_VALUES,
             n_val_paths_per_goal: int = VAL_PATHS_PER_GOAL, progress=None) -> SweepReport:
    cfgs = [(lr, rec.TransferConfig(frozen, shots, lr)) for lr in values]
    return _run_sweep("lr", base_net, scenarios, cfgs, planner_params, seed,
                      baseline, n_val_paths_per_goal, progress)


# --- activation dumps --------------------------------------------------------

def activation_maps(net: rec.Network, bitmap, layer: int) -> np.ndarray:
    """Post-ReLU eval-mode activations of one block, shape (16, H', W').

    bitmap is a TrailBitmap or a raw (5, N, N) channel-plane array.
    """
    if not (1 <= layer <= rec.N_BLOCKS):
        raise HarnessError(f"layer must be in 1..{rec.N_BLOCKS}, got {layer}")
    planes = bitmap.planes(net.dtype) if isinstance(bitmap, TrailBitmap) \
        else np.asarray(bitmap, dtype=net.dtype)
    h = planes[None]
    for block in net.blocks[:layer]:
        y, _ = nn._conv_forward(h, block.kernels.data, block.bias.data, block.stride)
        if not net.plain:
            y, _ = nn._bn_forward(y, block, "eval")
        h = np.maximum(y, 0)
    return h[0]


def render_pgm(values: np.ndarray) -> bytes:
    """Binary PGM (P5) from a uint8 2-D array."""
    arr = np.ascontiguousarray(values, dtype=np.uint8)
    h, w = arr.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + arr.tobytes()


def dump_activations(net: rec.Network, bitmap: TrailBitmap, layer: int,
                     out_dir) -> list[str]:
    """Write the 16 per-filter activation maps of a layer as PGM files,
    min-max normalized so the layer minimum maps to 0 and the maximum to 255."""
    from pathlib import Path as _P

    maps = activation_maps(net, bitmap, layer)
    lo, hi = float(maps.min()), float(maps.max())
    if hi > lo:
        scaled = np.rint((maps - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        scaled = np.zeros(maps.shape, dtype=np.uint8)
    out = _P(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(maps.shape[0]):
        path = out / f"layer{layer}_filter{k:02d}.pgm"
        path.write_bytes(render_pgm(scaled[k]))
        paths.append(str(path))
    return paths


# --- report emission ---------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _fmt_value(v) -> str:
    return f"{v:g}" if isinstance(v, float) else str(v)


def report_csv(report: SweepReport) -> str:
    """Rows per (value, observability, map) plus a mean row per (value, obs)."""
    lines = ["axis_value,observability,map_id,accuracy"]
    for value in report.values:
        for obs in report.observabilities:
            for i in range(N_TRANSFER_MAPS):
                lines.append(f"{_fmt_value(value)},{obs},{i},"
                             f"{_fmt(report.cells[(value, i, obs)])}")
            lines.append(f"{_fmt_value(value)},{obs},mean,"
                         f"{_fmt(report.means[(value, obs)])}")
    return "\n".join(lines) + "\n"


def _svg_polyline(points, color, dashed=False, width=2):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    dash = ' stroke-dasharray="6,4"' if dashed else ""
    return (f'<polyline fill="none" stroke="{color}" stroke-width="{width}"'
            f'{dash} points="{pts}" />')


def report_svg(report: SweepReport) -> str:
    """Self-contained line chart: accuracy vs observability, one series per
    swept value and the single-map baseline as a dashed series."""
    w, h = 720, 480
    left, right, top, bottom = 70, 180, 40, 50
    plot_w, plot_h = w - left - right, h - top - bottom
    obs = report.observabilities

    def sx(o):
        return left + plot_w * (o - obs[0]) / (obs[-1] - obs[0])

    def sy(acc):
        return top + plot_h * (1.0 - acc)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white" />',
        f'<text x="{left}" y="24" font-family="sans-serif" font-size="16">'
        f'accuracy vs observability ({report.axis} sweep, mean of '
        f'{N_TRANSFER_MAPS} transfer maps)</text>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(tick)
        parts.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + plot_w}" '
                     f'y2="{y:.2f}" stroke="#dddddd" stroke-width="1" />')
        parts.append(f'<text x="{left - 10}" y="{y + 4:.2f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="12">{tick:g}</text>')
    for o in obs:
        x = sx(o)
        parts.append(f'<text x="{x:.2f}" y="{top + plot_h + 20}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="12">{o}%</text>')
    parts.append(f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" '
                 f'fill="none" stroke="#333333" stroke-width="1" />')

    legend_x = left + plot_w + 16
    legend_y = top + 8
    for i, value in enumerate(report.values):
        color = _SERIES_COLORS[i % len(_SERIES_COLORS)]
        points = [(sx(o), sy(report.means[(value, o)])) for o in obs]
        parts.append(_svg_polyline(points, color))
        y = legend_y + 18 * i
        parts.append(f'<line x1="{legend_x}" y1="{y}" x2="{legend_x + 24}" y2="{y}" '
                     f'stroke="{color}" stroke-width="2" />')
        parts.append(f'<text x="{legend_x + 30}" y="{y + 4}" font-family="sans-serif" '
                     f'font-size="12">{report.axis}={_fmt_value(value)}</text>')
    baseline_points = [(sx(o), sy(report.baseline[o])) for o in obs
                       if o in report.baseline]
    if baseline_points:
        parts.append(_svg_polyline(baseline_points, "#000000", dashed=True))
        y = legend_y + 18 * len(report.values)
        parts.append(f'<line x1="{legend_x}" y1="{y}" x2="{legend_x + 24}" y2="{y}" '
                     f'stroke="#000000" stroke-width="2" stroke-dasharray="6,4" />')
        parts.append(f'<text x="{legend_x + 30}" y="{y + 4}" font-family="sans-serif" '
                     f'font-size="12">baseline</text>')
    parts.append(f'<text x="{left + plot_w / 2:.2f}" y="{h - 12}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13">observations retained '
                 f'from the path start (%)</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(report: SweepReport, out_dir) -> tuple[str, str]:
    """Write {axis}.csv and {axis}.svg; returns the two paths."""
    from pathlib import Path as _P

    out = _P(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{report.axis}.csv"
    svg_path = out / f"{report.axis}.svg"
    csv_path.write_text(report_csv(report), encoding="ascii")
    svg_path.write_text(report_svg(report), encoding="ascii")
    return str(csv_path), str(svg_path)


def parse_report_csv(text: str) -> dict:
    """Parse report_csv output back into {(value_str, obs, map_id): accuracy}."""
    rows = {}
    lines = text.strip().splitlines()
    if lines[0] != "axis_value,observability,map_id,accuracy":
        raise HarnessError(f"unexpected CSV header {lines[0]!r}")
    for line in lines[1:]:
        value, obs, map_id, acc = line.split(",")
        rows[(value, int(obs), map_id)] = float(acc)
    return rows


# --- flat key=value run metadata ------------------------------------------------

def write_metadata(path, mapping: dict) -> None:
    lines = [f"{k}={v}" for k, v in mapping.items()]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_metadata(path) -> dict[str, str]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                key, _, value = line.partition("=")
                out[key] = value
    return out
