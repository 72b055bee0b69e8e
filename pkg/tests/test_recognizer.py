import numpy as np
import pytest

from trailrec import (DatasetSpec, NoisyHeuristicParams, adapt, evaluate,
                      generate, load_network, make_shots, predict,
                      save_network, train_base)
from trailrec import recognizer as rec
from trailrec.dataset import Example
from trailrec.encoder import TrailBitmap
from trailrec.recognizer import Network, RecognizerError, TransferConfig, block_strides

from conftest import random_open_map


@pytest.fixture(scope="module")
def tiny_setup():
    """16x16 scenario with small train/test/transfer sets, shared per module."""
    import trailrec as tr

    rng = np.random.default_rng(777)
    grid = random_open_map(rng, size=16, name="base16")
    scenario = tr.sample_scenario(grid, 1)
    params = NoisyHeuristicParams(0.2, 10.0, 0)
    train = generate(DatasetSpec(scenario, 8, params, seed=10))   # 320 examples
    test = generate(DatasetSpec(scenario, 5, params, seed=20))    # 200 examples
    other_grid = random_open_map(rng, size=16, name="other16")
    other = tr.sample_scenario(other_grid, 2)
    return scenario, params, train, test, other


@pytest.fixture(scope="module")
def trained_net(tiny_setup):
    _, _, train, _, _ = tiny_setup
    net = Network(16, seed=3)
    net, losses = train_base(net, train, epochs=3)
    return net, losses


def random_bitmap(rng, size=16):
    return TrailBitmap(rng.integers(0, 5, size=(size, size), dtype=np.uint8))


class TestNetworkStructure:
    def test_seven_blocks_16_filters(self):
        net = Network(64, seed=0)
        assert len(net.blocks) == 7
        for block in net.blocks:
            assert block.kernels.data.shape[0] == 16
            assert block.kernels.data.shape[2:] == (3, 3)
        assert net.blocks[0].kernels.data.shape[1] == 5
        assert net.head_w.data.shape == (256, 10)

    @pytest.mark.parametrize("size", [8, 16, 32, 64, 128, 256, 512])
    def test_stride_rule_ends_at_four(self, size):
        strides = block_strides(size)
        side = size
        for s in strides:
            side = -(-side // s)
        assert side == 4
        # once the side reaches 4, all remaining strides are 1
        first_one = next((i for i, s in enumerate(strides) if s == 1), len(strides))
        assert all(s == 1 for s in strides[first_one:])

    def test_512_uses_all_stride_two(self):
        assert block_strides(512) == (2,) * 7

    @pytest.mark.parametrize("size", [8, 128, 512])
    def test_forward_pass_at_supported_sizes(self, rng, size):
        net = Network(size, seed=1)
        logits = net.logits(random_bitmap(rng, size=size).planes(net.dtype)[None])
        assert logits.shape == (1, 10)
        assert np.all(np.isfinite(logits))

    def test_rejects_bad_sizes(self):
        for size in (4, 12, 1024, 7):
            with pytest.raises(RecognizerError):
                Network(size, seed=0)

    def test_eval_forward_deterministic(self, rng):
        net = Network(16, seed=5)
        x = random_bitmap(rng).planes(net.dtype)[None]
        a = net.logits(x)
        b = net.logits(x)
        assert np.array_equal(a, b)

    def test_init_deterministic(self):
        a = save_network(Network(16, seed=9))
        b = save_network(Network(16, seed=9))
        assert a == b
        assert a != save_network(Network(16, seed=10))


class TestPredict:
    def test_probabilities_sum_to_one(self, rng):
        net = Network(16, seed=0)
        _, probs = predict(net, random_bitmap(rng))
        assert probs.shape == (10,)
        assert abs(float(probs.sum()) - 1.0) < 1e-6

    def test_two_way_tie_is_uniform(self, rng):
        net = Network(16, seed=0)
        # zero head weights, bias singles out classes 2 and 7 as exact ties
        net.head_w.data = np.zeros_like(net.head_w.data)
        net.head_b.data = np.zeros(10, dtype=net.dtype)
        net.head_b.data[2] = net.head_b.data[7] = 1.0
        bitmap = random_bitmap(rng)
        tie_rng = np.random.default_rng(123)
        picks = [predict(net, bitmap, tie_rng)[0] for _ in range(10_000)]
        counts = np.bincount(picks, minlength=10)
        assert counts[2] + counts[7] == 10_000
        assert abs(counts[2] / 10_000 - 0.5) < 0.02

    def test_shift_invariance(self, rng):
        net = Network(16, seed=0)
        bitmap = random_bitmap(rng)
        goal_a, probs_a = predict(net, bitmap)
        net.head_b.data = net.head_b.data + net.dtype.type(7.5)
        goal_b, probs_b = predict(net, bitmap)
        assert goal_a == goal_b
        assert np.allclose(probs_a, probs_b, atol=1e-6)


class TestTrainBase:
    def test_loss_decreases(self, trained_net):
        _, losses = trained_net
        assert losses[-1] < losses[0]

    def test_untrained_accuracy_is_chance(self, tiny_setup):
        _, _, _, test, _ = tiny_setup
        net = Network(16, seed=11)
        accs = evaluate(net, test)
        overall = float(np.mean(list(accs.values())))
        assert abs(overall - 0.10) < 0.05

    def test_empty_dataset_rejected(self):
        with pytest.raises(RecognizerError, match="empty"):
            train_base(Network(16, seed=0), [])

    def test_identical_seed_identical_checkpoint(self, tiny_setup):
        _, _, train, _, _ = tiny_setup
        subset = train[:64]
        a = save_network(train_base(Network(16, seed=4), subset, epochs=1)[0])
        b = save_network(train_base(Network(16, seed=4), subset, epochs=1)[0])
        assert a == b

    def test_plain_variant_trains(self, tiny_setup):
        # conv+ReLU blocks only; batch-norm parameters must stay untouched
        _, _, train, _, _ = tiny_setup
        net = Network(16, seed=4, plain=True)
        gamma_before = net.blocks[0].bn_gamma.data.copy()
        net, losses = train_base(net, train[:64], epochs=1)
        assert np.isfinite(losses[-1])
        assert np.array_equal(net.blocks[0].bn_gamma.data, gamma_before)
        back = load_network(save_network(net))
        assert back.plain


class TestEvaluate:
    def test_accuracy_matches_recount_oracle(self, trained_net, tiny_setup):
        net, _ = trained_net
        _, _, _, test, _ = tiny_setup
        accs, records = evaluate(net, test, seed=9, return_predictions=True)
        for obs in accs:
            relevant = [(label, pred) for o, label, pred in records if o == obs]
            correct = sum(1 for label, pred in relevant if label == pred)
            assert accs[obs] == correct / len(relevant)

    def test_all_correct_is_one(self, rng):
        net = Network(16, seed=0)
        bitmap = random_bitmap(rng)
        label, _ = predict(net, bitmap)
        examples = [Example(bitmap, label, 50, i) for i in range(8)]
        accs = evaluate(net, examples)
        assert accs == {50: 1.0}

    def test_prefix_grid_needs_paths(self, trained_net, tiny_setup):
        net, _ = trained_net
        with pytest.raises(RecognizerError, match="scenario and paths"):
            evaluate(net, [], prefix_grid=[10, 50])

    def test_prefix_grid_curve(self, trained_net, tiny_setup):
        scenario, params, _, _, _ = tiny_setup
        net, _ = trained_net
        from trailrec import plan_paths

        paths = plan_paths(scenario, 2, params, seed=55)
        accs = evaluate(net, [], prefix_grid=[5, 50, 100], scenario=scenario,
                        paths=paths, seed=1)
        assert set(accs) == {5, 50, 100}
        for acc in accs.values():
            assert 0.0 <= acc <= 1.0

    def test_empty_test_rejected(self, trained_net):
        with pytest.raises(RecognizerError):
            evaluate(trained_net[0], [])


class TestAdapt:
    def test_frozen_blocks_bit_identical(self, trained_net, tiny_setup):
        _, params, _, _, other = tiny_setup
        net, _ = trained_net
        shots = make_shots(other, 2, params, seed=50)
        cfg = TransferConfig(frozen_blocks=5, shots=2, transfer_lr=0.01)
        adapted = adapt(net, cfg, shots)
        for before, after in zip(net.blocks[:5], adapted.blocks[:5]):
            for p_before, p_after in zip(before.params(), after.params()):
                assert np.array_equal(p_before.data, p_after.data)
            assert np.array_equal(before.bn_running_mean, after.bn_running_mean)
            assert np.array_equal(before.bn_running_var, after.bn_running_var)

    def test_free_blocks_change(self, trained_net, tiny_setup):
        _, params, _, _, other = tiny_setup
        net, _ = trained_net
        shots = make_shots(other, 2, params, seed=50)
        adapted = adapt(net, TransferConfig(5, 2, 0.01), shots)
        assert not np.array_equal(net.blocks[6].kernels.data,
                                  adapted.blocks[6].kernels.data)
        assert not np.array_equal(net.head_w.data, adapted.head_w.data)

    def test_base_network_untouched(self, trained_net, tiny_setup):
        _, params, _, _, other = tiny_setup
        net, _ = trained_net
        before = save_network(net)
        adapt(net, TransferConfig(3, 2, 0.01), make_shots(other, 2, params, seed=51))
        assert save_network(net) == before

    def test_zero_shots_is_noop(self, trained_net):
        net, _ = trained_net
        adapted = adapt(net, TransferConfig(5, 0, 0.01), [])
        assert save_network(adapted) == save_network(net)

    def test_shot_size_mismatch(self, trained_net, tiny_setup):
        _, params, _, _, other = tiny_setup
        shots = make_shots(other, 2, params, seed=50)
        with pytest.raises(RecognizerError, match="expected 120"):
            adapt(trained_net[0], TransferConfig(5, 3, 0.01), shots)

    def test_config_validation(self):
        with pytest.raises(RecognizerError):
            TransferConfig(8, 5, 0.01)
        with pytest.raises(RecognizerError):
            TransferConfig(5, -1, 0.01)
        with pytest.raises(RecognizerError):
            TransferConfig(5, 5, 0.0)

    def test_divergent_lr_survives(self, trained_net, tiny_setup):
        _, params, _, test, other = tiny_setup
        net, _ = trained_net
        shots = make_shots(other, 2, params, seed=50)
        adapted = adapt(net, TransferConfig(5, 2, 1000.0), shots)
        accs = evaluate(adapted, test)  # diverged nets degrade to chance, no crash
        for acc in accs.values():
            assert 0.0 <= acc <= 1.0


class TestCheckpointRoundTrip:
    def test_accuracy_reproduced_exactly(self, trained_net, tiny_setup):
        _, _, _, test, _ = tiny_setup
        net, _ = trained_net
        back = load_network(save_network(net))
        assert evaluate(back, test, seed=7) == evaluate(net, test, seed=7)

    def test_bytes_stable(self, trained_net):
        net, _ = trained_net
        data = save_network(net)
        assert save_network(load_network(data)) == data

    def test_metadata_fields(self, trained_net):
        net, _ = trained_net
        back = load_network(save_network(net))
        assert back.input_size == net.input_size
        assert back.seed == net.seed
        assert back.plain == net.plain
        assert back.dtype == net.dtype
