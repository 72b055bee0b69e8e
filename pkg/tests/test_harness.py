import xml.etree.ElementTree as ET

import numpy as np
import pytest

from trailrec import (DatasetSpec, NoisyHeuristicParams, generate,
                      sample_scenario, train_base)
from trailrec import recognizer as rec
from trailrec.harness import (HarnessError, SweepReport, activation_maps,
                              dump_activations, emit_report, parse_report_csv,
                              read_metadata, report_csv, report_svg,
                              sweep_frozen, sweep_lr, sweep_shots, write_metadata)
from trailrec.recognizer import Network

from conftest import random_open_map


@pytest.fixture(scope="module")
def sweep_setup():
    import trailrec as tr

    rng = np.random.default_rng(4242)
    params = NoisyHeuristicParams(0.2, 10.0, 0)
    base_grid = random_open_map(rng, size=16, name="base")
    base = tr.sample_scenario(base_grid, 1)
    train = generate(DatasetSpec(base, 6, params, seed=10))
    test = generate(DatasetSpec(base, 3, params, seed=20))
    net = Network(16, seed=0)
    net, _ = train_base(net, train, epochs=2)
    baseline = rec.evaluate(net, test, seed=5)
    scenarios = [tr.sample_scenario(random_open_map(rng, size=16, name=f"t{i}"), 7 + i)
                 for i in range(5)]
    return net, scenarios, params, baseline


@pytest.fixture(scope="module")
def frozen_report(sweep_setup):
    net, scenarios, params, baseline = sweep_setup
    return sweep_frozen(net, scenarios, planner_params=params, seed=1,
                        baseline=baseline, values=(0, 5), shots=2,
                        n_val_paths_per_goal=2)


class TestSweeps:
    def test_report_shape(self, frozen_report):
        report = frozen_report
        assert report.axis == "frozen"
        assert report.values == (0, 5)
        assert len(report.cells) == 2 * 5 * 4
        assert len(report.means) == 2 * 4
        assert set(report.baseline) == {25, 50, 75, 100}
        assert len(report.dataset_hashes) == 5

    def test_means_are_map_averages(self, frozen_report):
        report = frozen_report
        for value in report.values:
            for obs in report.observabilities:
                mean = sum(report.cells[(value, i, obs)] for i in range(5)) / 5
                assert report.means[(value, obs)] == mean

    def test_sweep_is_reproducible(self, sweep_setup, frozen_report):
        net, scenarios, params, baseline = sweep_setup
        again = sweep_frozen(net, scenarios, planner_params=params, seed=1,
                             baseline=baseline, values=(0, 5), shots=2,
                             n_val_paths_per_goal=2)
        assert again.cells == frozen_report.cells
        assert again.dataset_hashes == frozen_report.dataset_hashes

    def test_shots_sweep_zero_value(self, sweep_setup):
        net, scenarios, params, baseline = sweep_setup
        report = sweep_shots(net, scenarios, planner_params=params, seed=2,
                             baseline=baseline, values=(0, 1),
                             n_val_paths_per_goal=2)
        # n=0 cells equal the zero-shot evaluation of the unadapted base net
        for i, scenario in enumerate(scenarios):
            assert all(0.0 <= report.cells[(0, i, o)] <= 1.0 for o in (25, 50, 75, 100))

    def test_lr_sweep_values(self, sweep_setup):
        net, scenarios, params, baseline = sweep_setup
        report = sweep_lr(net, scenarios, planner_params=params, seed=3,
                          baseline=baseline, values=(0.01, 1.0), shots=1,
                          n_val_paths_per_goal=2)
        assert report.values == (0.01, 1.0)

    def test_baseline_identical_across_sweeps_of_one_run(self, sweep_setup, frozen_report):
        net, scenarios, params, baseline = sweep_setup
        shots_report = sweep_shots(net, scenarios, planner_params=params, seed=1,
                                   baseline=baseline, values=(1,),
                                   n_val_paths_per_goal=2)
        assert shots_report.baseline == frozen_report.baseline == baseline

    def test_needs_five_maps(self, sweep_setup):
        net, scenarios, params, baseline = sweep_setup
        with pytest.raises(HarnessError, match="5"):
            sweep_frozen(net, scenarios[:3], planner_params=params, seed=1,
                         baseline=baseline, values=(0,), shots=1,
                         n_val_paths_per_goal=2)


class TestEmitReport:
    def test_csv_row_count(self, frozen_report):
        lines = report_csv(frozen_report).strip().splitlines()
        n_values = len(frozen_report.values)
        assert lines[0] == "axis_value,observability,map_id,accuracy"
        assert len(lines) - 1 == n_values * 4 * 5 + n_values * 4

    def test_csv_reparse_reproduces_means(self, frozen_report):
        rows = parse_report_csv(report_csv(frozen_report))
        for value in frozen_report.values:
            for obs in frozen_report.observabilities:
                cells = [rows[(str(value), obs, str(i))] for i in range(5)]
                mean = rows[(str(value), obs, "mean")]
                assert abs(sum(cells) / 5 - mean) < 1e-9
                assert abs(mean - frozen_report.means[(value, obs)]) < 1e-9

    def test_svg_is_wellformed_xml_with_dashed_baseline(self, frozen_report):
        svg = report_svg(frozen_report)
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")
        assert "stroke-dasharray" in svg
        assert "baseline" in svg

    def test_emit_writes_files(self, frozen_report, tmp_path):
        csv_path, svg_path = emit_report(frozen_report, tmp_path)
        assert open(csv_path).read() == report_csv(frozen_report)
        assert open(svg_path).read() == report_svg(frozen_report)

    def test_emission_deterministic(self, frozen_report, tmp_path):
        a = emit_report(frozen_report, tmp_path / "a")
        b = emit_report(frozen_report, tmp_path / "b")
        assert open(a[0], "rb").read() == open(b[0], "rb").read()
        assert open(a[1], "rb").read() == open(b[1], "rb").read()

    def test_rejects_out_of_range_accuracy(self, frozen_report):
        with pytest.raises(HarnessError, match="outside"):
            SweepReport(frozen_report.axis, frozen_report.values,
                        frozen_report.observabilities, frozen_report.map_names,
                        dict(frozen_report.cells),
                        {k: 1.5 for k in frozen_report.means},
                        frozen_report.baseline, 0, frozen_report.dataset_hashes)


class TestActivations:
    def test_sixteen_files_with_layer_dims(self, sweep_setup, tmp_path):
        net, scenarios, params, _ = sweep_setup
        from trailrec import encode

        bitmap = encode(scenarios[0], [])
        # 16x16 input: blocks 1-2 stride 2 (16 -> 8 -> 4), rest stride 1
        for layer, side in ((1, 8), (2, 4), (7, 4)):
            paths = dump_activations(net, bitmap, layer, tmp_path / f"l{layer}")
            assert len(paths) == 16
            header = open(paths[0], "rb").read().split(b"\n")
            assert header[0] == b"P5"
            assert header[1] == f"{side} {side}".encode()

    def test_min_zero_max_255(self, sweep_setup, tmp_path):
        net, scenarios, _, _ = sweep_setup
        from trailrec import encode

        bitmap = encode(scenarios[0], [])
        maps = activation_maps(net, bitmap, 3)
        paths = dump_activations(net, bitmap, 3, tmp_path)
        data = np.concatenate([
            np.frombuffer(open(p, "rb").read().split(b"255\n", 1)[1], np.uint8)
            for p in paths])
        if float(maps.max()) > float(maps.min()):
            assert data.min() == 0
            assert data.max() == 255

    def test_constant_zero_input_gives_constant_images(self, sweep_setup):
        net, _, _, _ = sweep_setup
        # bias-only response: every filter image is a single constant
        maps = activation_maps(net, np.zeros((5, 16, 16)), 1)
        flat = maps.reshape(16, -1)
        assert np.allclose(flat, flat[:, :1])

    def test_layer_out_of_range(self, sweep_setup):
        net, scenarios, _, _ = sweep_setup
        from trailrec import encode

        bitmap = encode(scenarios[0], [])
        for layer in (0, 8):
            with pytest.raises(HarnessError, match="layer"):
                activation_maps(net, bitmap, layer)


class TestMetadata:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "run.meta"
        write_metadata(path, {"seed": 3, "lr": 0.01, "name": "base"})
        assert read_metadata(path) == {"seed": "3", "lr": "0.01", "name": "base"}
