"""Seven-block convolutional goal recognizer.

Base training, few-shot adaptation with layer freezing, prediction with
seeded random tie-breaking, and per-observability accuracy evaluation.
Strides are 2 while the spatial side exceeds 4 and 1 afterward, so the dense
head always sees 16 * 4 * 4 = 256 features for any power-of-two input >= 8.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from . import nn
from .dataset import Example
from .encoder import N_CHANNELS, TrailBitmap, encode
from .gridworld import N_GOALS, Scenario
from .planner import Path, truncate

N_BLOCKS = 7
N_FILTERS = 16
FINAL_SIDE = 4
HEAD_FEATURES = N_FILTERS * FINAL_SIDE * FINAL_SIDE

ADAPT_EPOCHS = 3
ADAPT_BATCH = 10  # calibrated: smaller batches fit the few-shot sets better

_INIT_TAG = 131
_SHUFFLE_TAG = 132
_DROPOUT_TAG = 133
_ADAPT_TAG = 134
_EVAL_TAG = 135
_PREDICT_TAG = 136


class RecognizerError(ValueError):
    """Invalid network configuration or training request."""


def block_strides(input_size: int) -> tuple[int, ...]:
    """Per-block strides for a power-of-two input, ending at spatial side 4."""
    if input_size < 8 or (input_size & (input_size - 1)) != 0:
        raise RecognizerError(f"input size must be a power of two >= 8, got {input_size}")
    if input_size > 4 * 2 ** N_BLOCKS:
        raise RecognizerError(f"input size {input_size} needs more than {N_BLOCKS} blocks")
    strides = []
    side = input_size
    for _ in range(N_BLOCKS):
        s = 2 if side > FINAL_SIDE else 1
        strides.append(s)
        side = -(-side // s)
    return tuple(strides)


class Network:
    """Seven conv blocks (16 filters of 3x3) plus a dense 256 -> 10 head."""

    def __init__(self, input_size: int, seed: int, plain: bool = False,
                 dtype=np.float32):
        if not (0 <= seed < 2 ** 53):
            raise RecognizerError(f"seed must be a non-negative int < 2**53, got {seed}")
        strides = block_strides(input_size)
        rng = np.random.default_rng([_INIT_TAG, seed])
        self.blocks: list[nn.ConvBlock] = []
        in_ch = N_CHANNELS
        for i, stride in enumerate(strides):
            self.blocks.append(nn.ConvBlock(f"block{i}", in_ch, N_FILTERS,
                                            stride=stride, dropout_p=0.1,
                                            rng=rng, dtype=dtype))
            in_ch = N_FILTERS
        self.head_w = nn.Param("head/weights", nn.he_uniform_init(
            (HEAD_FEATURES, N_GOALS), HEAD_FEATURES, rng, dtype))
        self.head_b = nn.Param("head/bias", np.zeros(N_GOALS, dtype=dtype))
        self.input_size = input_size
        self.seed = seed
        self.plain = plain
        self.dtype = np.dtype(dtype)
        self.mode = "eval"

    def params(self, frozen_prefix: int = 0) -> list[nn.Param]:
        out: list[nn.Param] = []
        for block in self.blocks[frozen_prefix:]:
            if self.plain:  # no batch norm, so no bn parameters to optimize
                out.extend([block.kernels, block.bias])
            else:
                out.extend(block.params())
        out.extend([self.head_w, self.head_b])
        return out

    def clone(self) -> "Network":
        return copy.deepcopy(self)

    # forward/backward keep per-block caches only above the frozen prefix,
    # since gradients never need to flow into locked blocks
    def _forward(self, x: np.ndarray, mode: str, rng=None,
                 want_caches: bool = False, frozen_prefix: int = 0):
        h = x
        caches: list = []
        for i, block in enumerate(self.blocks):
            block_mode = "eval" if (mode == "train" and i < frozen_prefix) else mode
            conv_in = h
            y, cols = nn._conv_forward(h, block.kernels.data, block.bias.data,
                                       block.stride)
            if self.plain:
                z, bn_cache = y, None
            else:
                z, bn_cache = nn._bn_forward(y, block, block_mode)
            a = np.maximum(z, 0)
            if block_mode == "train" and not self.plain and block.dropout_p > 0.0:
                h, drop_mask = nn._dropout_forward(a, block.dropout_p, "train", rng)
            else:
                h, drop_mask = a, None
            if want_caches and i >= frozen_prefix:
                caches.append((conv_in.shape, cols, bn_cache, z > 0, drop_mask))
            else:
                caches.append(None)
        feats = h.reshape(h.shape[0], -1)
        return feats, caches

    def _backward(self, grad_feats: np.ndarray, caches, frozen_prefix: int = 0):
        g = grad_feats.reshape(grad_feats.shape[0], N_FILTERS, FINAL_SIDE, FINAL_SIDE)
        for i in range(len(self.blocks) - 1, frozen_prefix - 1, -1):
            block = self.blocks[i]
            in_shape, cols, bn_cache, relu_mask, drop_mask = caches[i]
            if drop_mask is not None:
                g = g * drop_mask
            g = g * relu_mask
            if bn_cache is not None:
                g, ggamma, gbeta = nn._bn_backward(g, bn_cache)
                block.bn_gamma.grad = ggamma
                block.bn_beta.grad = gbeta
            g, gw, gb = nn._conv_backward(g, cols, in_shape, block.kernels.data,
                                          block.stride)
            block.kernels.grad = gw
            block.bias.grad = gb

    def logits(self, x: np.ndarray) -> np.ndarray:
        feats, _ = self._forward(x, "eval")
        return feats @ self.head_w.data + self.head_b.data


@dataclass(frozen=True)
class TransferConfig:
    frozen_blocks: int
    shots: int
    transfer_lr: float
    epochs: int = ADAPT_EPOCHS

    def __post_init__(self):
        if not (0 <= self.frozen_blocks <= N_BLOCKS):
            raise RecognizerError(f"frozen_blocks must be in 0..{N_BLOCKS}, "
                                  f"got {self.frozen_blocks}")
        if self.shots < 0:
            raise RecognizerError(f"shots must be >= 0, got {self.shots}")
        if not self.transfer_lr > 0:
            raise RecognizerError(f"transfer_lr must be > 0, got {self.transfer_lr}")


def _batch_planes(examples: list[Example], indices, dtype) -> np.ndarray:
    return np.stack([examples[i].bitmap.planes(dtype) for i in indices])


def _batches(order: np.ndarray, batch_size: int):
    """Contiguous batches; a trailing singleton is merged into the previous
    batch so train-mode batch norm always sees at least two examples."""
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2:] = [np.concatenate(batches[-2:])]
    return batches


def _train(net: Network, examples: list[Example], epochs: int, lr: float,
           batch_size: int, seed: int, frozen_prefix: int = 0,
           stop_on_divergence: bool = False) -> list[float]:
    if not examples:
        raise RecognizerError("training set is empty")
    if len(examples) == 1:
        raise RecognizerError("training needs at least two examples for batch norm")
    labels = np.array([ex.label for ex in examples])
    shuffle_rng = np.random.default_rng([_SHUFFLE_TAG, seed])
    dropout_rng = np.random.default_rng([_DROPOUT_TAG, seed])
    adam = nn.AdamState(lr=lr)
    params = net.params(frozen_prefix)
    eye = np.eye(N_GOALS, dtype=net.dtype)
    losses: list[float] = []
    for _ in range(epochs):
        order = shuffle_rng.permutation(len(examples))
        total, count = 0.0, 0
        for idx in _batches(order, batch_size):
            x = _batch_planes(examples, idx, net.dtype)
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                feats, caches = net._forward(x, "train", dropout_rng,
                                             want_caches=True,
                                             frozen_prefix=frozen_prefix)
                try:
                    loss, _, grads = nn.dense_softmax_xent(
                        feats, net.head_w.data, net.head_b.data, eye[labels[idx]])
                except nn.NonFiniteError:
                    if stop_on_divergence:
                        losses.append(float("inf"))
                        return losses
                    raise
                net.head_w.grad = grads["weights"]
                net.head_b.grad = grads["bias"]
                net._backward(grads["features"], caches, frozen_prefix)
                nn.adam_step(params, adam)
            total += loss * len(idx)
            count += len(idx)
        losses.append(total / count)
    return losses


def train_base(net: Network, train: list[Example], epochs: int = 5,
               lr: float = 0.01, batch_size: int = 32,
               seed: int | None = None) -> tuple[Network, list[float]]:
    """Train the freshly initialized base network; returns it with the
    per-epoch mean loss curve."""
    losses = _train(net, train, epochs, lr, batch_size,
                    net.seed if seed is None else seed)
    return net, losses


def adapt(net: Network, cfg: TransferConfig, shots: list[Example]) -> Network:
    """Few-shot adaptation on a deep copy: the first cfg.frozen_blocks blocks
    are locked (parameters and batch-norm statistics, run in eval mode); the
    rest train with a fresh Adam state at the transfer learning rate."""
    if len(shots) != 4 * cfg.shots * N_GOALS:
        raise RecognizerError(f"expected {4 * cfg.shots * N_GOALS} shot examples "
                              f"for {cfg.shots} shots, got {len(shots)}")
    adapted = net.clone()
    if cfg.shots == 0:
        return adapted
    for block in adapted.blocks[:cfg.frozen_blocks]:
        block.frozen = True
    _train(adapted, shots, cfg.epochs, cfg.transfer_lr, ADAPT_BATCH,
           seed=_derived_seed(_ADAPT_TAG, net.seed), frozen_prefix=cfg.frozen_blocks,
           stop_on_divergence=True)
    return adapted


def _derived_seed(tag: int, seed: int) -> int:
    state = np.random.SeedSequence([tag, seed]).generate_state(1, np.uint64)
    return int(state[0]) & 0x7FFF_FFFF_FFFF


def _pick(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Argmax with a uniform draw among exact ties; non-finite rows count as
    a full tie so diverged networks degrade to chance instead of crashing."""
    if not np.all(np.isfinite(probs)):
        return int(rng.integers(len(probs)))
    ties = np.flatnonzero(probs == probs.max())
    if len(ties) == 1:
        return int(ties[0])
    return int(ties[rng.integers(len(ties))])


def predict(net: Network, bitmap: TrailBitmap,
            rng: np.random.Generator | None = None) -> tuple[int, np.ndarray]:
    """Most probable goal index and the 10 softmax scores."""
    if rng is None:
        rng = np.random.default_rng([_PREDICT_TAG, net.seed])
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        logits = net.logits(bitmap.planes(net.dtype)[None])
        probs = nn.softmax(logits)[0]
    return _pick(probs, rng), probs


def _predict_batched(net: Network, examples: list[Example],
                     rng: np.random.Generator, batch_size: int = 256) -> np.ndarray:
    out = np.empty(len(examples), dtype=np.int64)
    for lo in range(0, len(examples), batch_size):
        idx = range(lo, min(lo + batch_size, len(examples)))
        x = _batch_planes(examples, idx, net.dtype)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            probs = nn.softmax(net.logits(x))
        for row, i in zip(probs, idx):
            out[i] = _pick(row, rng)
    return out


def evaluate(net: Network, test: list[Example], prefix_grid=None, *,
             scenario: Scenario | None = None,
             paths: list[tuple[int, Path]] | None = None,
             seed: int = 0, return_predictions: bool = False):
    """Accuracy bucketed by observability level.

    With prefix_grid given, full paths are re-truncated at each grid
    percentage instead (scenario and (label, path) pairs required), which
    yields the online-convergence curve.
    """
    rng = np.random.default_rng([_EVAL_TAG, seed])
    if prefix_grid is not None:
        if scenario is None or paths is None:
            raise RecognizerError("prefix_grid evaluation needs scenario and paths")
        accs = {}
        for pct in prefix_grid:
            examples = [Example(encode(scenario, truncate(path, pct)), label,
                                min(100, max(1, int(round(pct)))), i)
                        for i, (label, path) in enumerate(paths)]
            preds = _predict_batched(net, examples, rng)
            labels = np.array([ex.label for ex in examples])
            accs[pct] = float(np.mean(preds == labels))
        return accs

    if not test:
        raise RecognizerError("test set is empty")
    preds = _predict_batched(net, test, rng)
    labels = np.array([ex.label for ex in test])
    obs = np.array([ex.observability for ex in test])
    accs = {int(o): float(np.mean(preds[obs == o] == labels[obs == o]))
            for o in sorted(set(int(o) for o in obs))}
    if return_predictions:
        records = [(int(o), int(l), int(p)) for o, l, p in zip(obs, labels, preds)]
        return accs, records
    return accs


# --- checkpoints -----------------------------------------------------------------

def network_tensors(net: Network) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {
        "meta/input_size": np.array(float(net.input_size)),
        "meta/seed": np.array(float(net.seed)),
        "meta/plain": np.array(1.0 if net.plain else 0.0),
        "meta/float32": np.array(1.0 if net.dtype == np.float32 else 0.0),
    }
    for block in net.blocks:
        for p in block.params():
            tensors[p.name] = p.data
        tensors[f"{block.name}/bn_running_mean"] = block.bn_running_mean
        tensors[f"{block.name}/bn_running_var"] = block.bn_running_var
    tensors[net.head_w.name] = net.head_w.data
    tensors[net.head_b.name] = net.head_b.data
    return tensors


def save_network(net: Network) -> bytes:
    return nn.save_tensors(network_tensors(net))


def load_network(data: bytes) -> Network:
    tensors = nn.load_tensors(data)
    try:
        input_size = int(tensors["meta/input_size"])
        seed = int(tensors["meta/seed"])
        plain = bool(tensors["meta/plain"])
        dtype = np.float32 if tensors["meta/float32"] else np.float64
    except KeyError as missing:
        raise RecognizerError(f"checkpoint lacks tensor {missing}") from None
    net = Network(input_size, seed, plain=plain, dtype=dtype)
    for block in net.blocks:
        for p in block.params():
            p.data = tensors[p.name].astype(net.dtype)
        block.bn_running_mean = tensors[f"{block.name}/bn_running_mean"].astype(net.dtype)
        block.bn_running_var = tensors[f"{block.name}/bn_running_var"].astype(net.dtype)
    net.head_w.data = tensors["head/weights"].astype(net.dtype)
    net.head_b.data = tensors["head/bias"].astype(net.dtype)
    return net


def save_checkpoint(net: Network, path) -> bytes:
    data = save_network(net)
    with open(path, "wb") as fh:
        fh.write(data)
    return data


def load_checkpoint(path) -> Network:
    with open(path, "rb") as fh:
        return load_network(fh.read())
