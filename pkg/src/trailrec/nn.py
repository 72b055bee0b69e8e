"""Minimal deterministic neural-network primitives on numpy arrays.

Hand-written forward and backward passes for 3x3 same-padded convolution
(cross-correlation), batch normalization, inverted dropout, a dense softmax
cross-entropy head, Adam, and He-uniform initialization. Everything runs in
float32 for training speed or float64 for gradient checking; no autodiff.
"""

from __future__ import annotations

import math
import struct

import numpy as np

KERNEL_SIZE = 3
PADDING = 1
BN_EPS = 1e-5
BN_MOMENTUM = 0.1
ADAM_EPS = 1e-8

NNW_MAGIC = b"NNW1"


class NNError(ValueError):
    """Shape mismatch or invalid layer configuration."""


class NonFiniteError(NNError):
    """Loss evaluation hit inf/nan inputs (diverged training)."""


class Param:
    """A named parameter tensor with an optional gradient buffer."""

    __slots__ = ("name", "data", "grad", "frozen")

    def __init__(self, name: str, data: np.ndarray, frozen: bool = False):
        self.name = name
        self.data = np.asarray(data)
        self.grad = None
        self.frozen = frozen

    def __repr__(self):
        tag = " frozen" if self.frozen else ""
        return f"Param({self.name}, {self.data.shape}{tag})"


def he_uniform_init(shape, fan_in: int, rng: np.random.Generator,
                    dtype=np.float32) -> np.ndarray:
    """Uniform values in [-L, L] with L = sqrt(6 / fan_in)."""
    if fan_in <= 0:
        raise NNError(f"fan_in must be positive, got {fan_in}")
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class ConvBlock:
    """conv 3x3 -> batch norm -> ReLU -> dropout, with a freeze flag.

    Batch-norm running statistics are plain arrays, never optimized; freezing
    a block locks every parameter and (by running the block in eval mode
    during training) its statistics too.
    """

    def __init__(self, name: str, in_channels: int, filters: int = 16,
                 stride: int = 1, dropout_p: float = 0.1,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if stride not in (1, 2):
            raise NNError(f"stride must be 1 or 2, got {stride}")
        if not (0.0 <= dropout_p < 1.0):
            raise NNError(f"dropout_p must be in [0, 1), got {dropout_p}")
        if rng is None:
            rng = np.random.default_rng(0)
        fan_in = in_channels * KERNEL_SIZE * KERNEL_SIZE
        self.name = name
        self.in_channels = in_channels
        self.filters = filters
        self.stride = stride
        self.dropout_p = dropout_p
        self.kernels = Param(f"{name}/kernels", he_uniform_init(
            (filters, in_channels, KERNEL_SIZE, KERNEL_SIZE), fan_in, rng, dtype))
        self.bias = Param(f"{name}/bias", np.zeros(filters, dtype=dtype))
        self.bn_gamma = Param(f"{name}/bn_gamma", np.ones(filters, dtype=dtype))
        self.bn_beta = Param(f"{name}/bn_beta", np.zeros(filters, dtype=dtype))
        self.bn_running_mean = np.zeros(filters, dtype=dtype)
        self.bn_running_var = np.ones(filters, dtype=dtype)
        self._frozen = False

    def params(self) -> list[Param]:
        return [self.kernels, self.bias, self.bn_gamma, self.bn_beta]

    @property
    def frozen(self) -> bool:
        return self._frozen

    @frozen.setter
    def frozen(self, value: bool):
        self._frozen = bool(value)
        for p in self.params():
            p.frozen = self._frozen


# --- convolution -----------------------------------------------------------

def _conv_out_size(side: int, stride: int) -> int:
    return (side + 2 * PADDING - KERNEL_SIZE) // stride + 1


def _im2col(x: np.ndarray, stride: int) -> tuple[np.ndarray, int, int]:
    """Patch matrix of shape (B*out_h*out_w, C*9) from a padded input."""
    B, C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (PADDING, PADDING), (PADDING, PADDING)))
    out_h = _conv_out_size(H, stride)
    out_w = _conv_out_size(W, stride)
    s0, s1, s2, s3 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp, (B, C, out_h, out_w, KERNEL_SIZE, KERNEL_SIZE),
        (s0, s1, s2 * stride, s3 * stride, s2, s3), writeable=False)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(
        B * out_h * out_w, C * KERNEL_SIZE * KERNEL_SIZE)
    return cols, out_h, out_w


def _conv_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray,
                  stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Batched cross-correlation; returns (output, cached patch matrix)."""
    if x.ndim != 4:
        raise NNError(f"conv input must be 4-D (B,C,H,W), got shape {x.shape}")
    B, C, H, W = x.shape
    out_ch, in_ch, kh, kw = kernels.shape
    if in_ch != C:
        raise NNError(f"input shape {x.shape} does not match kernel shape {kernels.shape}")
    cols, out_h, out_w = _im2col(x, stride)
    y = cols @ kernels.reshape(out_ch, -1).T
    y += bias
    return y.reshape(B, out_h, out_w, out_ch).transpose(0, 3, 1, 2), cols


def _col2im(gcols: np.ndarray, x_shape: tuple, stride: int) -> np.ndarray:
    """Scatter-add patch gradients back to input positions."""
    B, C, H, W = x_shape
    Hp, Wp = H + 2 * PADDING, W + 2 * PADDING
    out_h = _conv_out_size(H, stride)
    out_w = _conv_out_size(W, stride)
    g = gcols.reshape(B, out_h, out_w, C, KERNEL_SIZE, KERNEL_SIZE)
    g = g.transpose(0, 3, 4, 5, 1, 2)
    gx = np.zeros((B, C, Hp, Wp), dtype=gcols.dtype)
    for i in range(KERNEL_SIZE):
        for j in range(KERNEL_SIZE):
            gx[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += g[:, :, i, j]
    return gx[:, :, PADDING:PADDING + H, PADDING:PADDING + W]


def _conv_backward(grad_out: np.ndarray, cols: np.ndarray, x_shape: tuple,
                   kernels: np.ndarray, stride: int):
    out_ch = kernels.shape[0]
    gmat = grad_out.transpose(0, 2, 3, 1).reshape(-1, out_ch)
    grad_kernels = (gmat.T @ cols).reshape(kernels.shape)
    grad_bias = gmat.sum(axis=0)
    gcols = gmat @ kernels.reshape(out_ch, -1)
    grad_input = _col2im(gcols, x_shape, stride)
    return grad_input, grad_kernels, grad_bias


def conv2d_forward(x: np.ndarray, block: ConvBlock) -> np.ndarray:
    """Same-padded 3x3 convolution with bias; accepts (C,H,W) or (B,C,H,W)."""
    single = x.ndim == 3
    y, _ = _conv_forward(x[None] if single else x, block.kernels.data,
                         block.bias.data, block.stride)
    return y[0] if single else y


def conv2d_backward(grad_out: np.ndarray, x: np.ndarray, block: ConvBlock):
    """Gradients of conv2d_forward w.r.t. input, kernels, and bias."""
    single = x.ndim == 3
    x4 = x[None] if single else x
    g4 = grad_out[None] if single else grad_out
    cols, out_h, out_w = _im2col(x4, block.stride)
    if g4.shape != (x4.shape[0], block.filters, out_h, out_w):
        raise NNError(f"grad shape {grad_out.shape} does not match conv output "
                      f"{(x4.shape[0], block.filters, out_h, out_w)}")
    gx, gw, gb = _conv_backward(g4, cols, x4.shape, block.kernels.data, block.stride)
    return (gx[0] if single else gx), gw, gb


# --- batch normalization ----------------------------------------------------

def _bn_forward(x: np.ndarray, block: ConvBlock, mode: str,
                update_running: bool = True):
    if x.ndim != 4:
        raise NNError(f"batch-norm input must be 4-D, got shape {x.shape}")
    if mode not in ("train", "eval"):
        raise NNError(f"mode must be 'train' or 'eval', got {mode!r}")
    gamma = block.bn_gamma.data.reshape(1, -1, 1, 1)
    beta = block.bn_beta.data.reshape(1, -1, 1, 1)
    if mode == "train":
        if x.shape[0] < 2:
            raise NNError(f"train-mode batch norm needs batch size >= 2, got {x.shape[0]}")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        if update_running:
            block.bn_running_mean += BN_MOMENTUM * (mean.astype(block.bn_running_mean.dtype)
                                                    - block.bn_running_mean)
            block.bn_running_var += BN_MOMENTUM * (var.astype(block.bn_running_var.dtype)
                                                   - block.bn_running_var)
    else:
        mean = block.bn_running_mean.astype(x.dtype)
        var = block.bn_running_var.astype(x.dtype)
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean.reshape(1, -1, 1, 1)) * inv.reshape(1, -1, 1, 1)
    y = gamma * xhat + beta
    return y, (xhat, inv, mode, block)


def _bn_backward(grad_out: np.ndarray, cache):
    xhat, inv, mode, block = cache
    gamma = block.bn_gamma.data.reshape(1, -1, 1, 1)
    grad_gamma = (grad_out * xhat).sum(axis=(0, 2, 3))
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    gxhat = grad_out * gamma
    inv4 = inv.reshape(1, -1, 1, 1)
    if mode == "train":
        B, _, H, W = grad_out.shape
        m = B * H * W
        grad_x = (inv4 / m) * (m * gxhat
                               - gxhat.sum(axis=(0, 2, 3), keepdims=True)
                               - xhat * (gxhat * xhat).sum(axis=(0, 2, 3), keepdims=True))
    else:
        grad_x = gxhat * inv4
    return grad_x, grad_gamma, grad_beta


def batchnorm_forward(x: np.ndarray, block: ConvBlock, mode: str) -> np.ndarray:
    """Per-channel normalization over (B, H, W); train mode updates running stats."""
    y, _ = _bn_forward(x, block, mode)
    return y


def batchnorm_backward(grad_out: np.ndarray, x: np.ndarray, block: ConvBlock,
                       mode: str = "train"):
    """Gradients of batchnorm_forward w.r.t. x, gamma, beta (stats recomputed)."""
    _, cache = _bn_forward(x, block, mode, update_running=False)
    return _bn_backward(grad_out, cache)


# --- dropout and ReLU -------------------------------------------------------

def _dropout_forward(x: np.ndarray, p: float, mode: str,
                     rng: np.random.Generator | None):
    if not (0.0 <= p < 1.0):
        raise NNError(f"dropout p must be in [0, 1), got {p}")
    if mode not in ("train", "eval"):
        raise NNError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or p == 0.0:
        return x, None
    if rng is None:
        raise NNError("train-mode dropout needs an rng")
    keep = rng.random(x.shape) >= p
    mask = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - p))
    return x * mask, mask


def dropout(x: np.ndarray, p: float, mode: str,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Inverted dropout: survivors scaled by 1/(1-p) in train mode, identity in eval."""
    y, _ = _dropout_forward(x, p, mode, rng)
    return y


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


# --- dense softmax cross-entropy head ----------------------------------------

def dense_softmax_xent(features: np.ndarray, weights: np.ndarray, bias: np.ndarray,
                       labels: np.ndarray):
    """Dense layer + softmax + mean cross-entropy over the batch.

    labels may be one-hot (B, 10) or integer class indices (B,). Returns
    (loss, probabilities, grads) with grads for features, weights, and bias.
    """
    f = np.asarray(features)
    if f.ndim != 2:
        raise NNError(f"features must be 2-D (B, F), got shape {f.shape}")
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(weights))
            and np.all(np.isfinite(bias))):
        raise NonFiniteError("non-finite values in head inputs")
    n_out = weights.shape[1]
    y = np.asarray(labels)
    if y.ndim == 1:
        y = np.eye(n_out, dtype=f.dtype)[y]
    if y.shape != (f.shape[0], n_out):
        raise NNError(f"labels shape {labels.shape} does not match batch {f.shape[0]} x {n_out}")

    logits = f @ weights + bias
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    denom = ez.sum(axis=1, keepdims=True)
    probs = ez / denom
    loss = float(np.mean(np.log(denom[:, 0]) - (z * y).sum(axis=1)))
    glogits = (probs - y) / f.shape[0]
    grads = {
        "features": glogits @ weights.T,
        "weights": f.T @ glogits,
        "bias": glogits.sum(axis=0),
    }
    return loss, probs, grads


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


# --- Adam ---------------------------------------------------------------------

class AdamState:
    """First/second moment buffers per parameter name plus the shared step count."""

    def __init__(self, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = ADAM_EPS):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(params: list[Param], state: AdamState):
    """One Adam update over every unfrozen parameter with a gradient set."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p in params:
        if p.frozen:
            continue
        if p.grad is None:
            raise NNError(f"parameter {p.name} has no gradient")
        g = p.grad
        m = state.m.get(p.name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        else:
            v = state.v[p.name]
        m += (1.0 - state.beta1) * (g - m)
        v += (1.0 - state.beta2) * (g * g - v)
        state.m[p.name] = m
        state.v[p.name] = v
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# --- NNW1 checkpoint container --------------------------------------------------

def save_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    """NNW1: magic, tensor count, then per tensor name/rank/dims/f64 values."""
    chunks = [NNW_MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        a = np.asarray(arr, dtype="<f8")  # tobytes() yields C order for any layout
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", a.ndim))
        chunks.append(struct.pack(f"<{a.ndim}I", *a.shape))
        chunks.append(a.tobytes())
    return b"".join(chunks)


def load_tensors(data: bytes) -> dict[str, np.ndarray]:
    """Parse an NNW1 container back into an ordered name -> float64 array dict."""
    def need(n: int, what: str):
        if offset + n > len(data):
            raise NNError(f"truncated checkpoint while reading {what}")

    offset = 0
    need(8, "header")
    if data[:4] != NNW_MAGIC:
        raise NNError(f"bad checkpoint magic {data[:4]!r}")
    (count,) = struct.unpack_from("<I", data, 4)
    offset = 8
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        need(2, "name length")
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        need(name_len + 1, "name and rank")
        name = data[offset:offset + name_len].decode("utf-8")
        offset += name_len
        rank = data[offset]
        offset += 1
        need(4 * rank, "dims")
        dims = struct.unpack_from(f"<{rank}I", data, offset)
        offset += 4 * rank
        n_values = int(np.prod(dims, dtype=np.int64)) if rank else 1
        need(8 * n_values, f"values of {name}")
        values = np.frombuffer(data, dtype="<f8", count=n_values, offset=offset)
        offset += 8 * n_values
        tensors[name] = values.reshape(dims).copy()
    if offset != len(data):
        raise NNError(f"{len(data) - offset} trailing bytes after last tensor")
    return tensors
