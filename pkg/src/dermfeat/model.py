"""Hypercolumn fully-convolutional network.

Each encoder block is conv(3x3, pad 1) -> relu; 2x2 max pooling follows
every block except the last. Every block's activation is tapped before
its pool, bilinearly resized back to the input resolution, and the taps
are concatenated into a hypercolumn. A 1x1 convolution maps the
hypercolumn to one channel per class, and an elementwise logistic
squashes the output into (0, 1). The network is fully convolutional:
output spatial size always equals input spatial size.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import ops
from .ops import ConvSpec, as_f64
from .superpixels import CLASS_COUNT, CLASS_NAMES

WEIGHTS_MAGIC = b"HFCNv001"


@dataclass(frozen=True)
class EncoderConfig:
    """Encoder geometry: one 3x3 conv per block, pooling between blocks."""

    channels: tuple[int, ...] = (8, 16, 32, 64, 64)
    in_channels: int = 3
    kernel: int = 3

    def __post_init__(self):
        if not self.channels or any(c < 1 for c in self.channels):
            raise ValueError(f"block channels must be positive, got {self.channels}")
        if self.in_channels < 1:
            raise ValueError(f"in_channels must be positive, got {self.in_channels}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be a positive odd extent, got {self.kernel}")

    @property
    def block_count(self) -> int:
        return len(self.channels)

    @property
    def hypercolumn_channels(self) -> int:
        return sum(self.channels)

    @property
    def size_multiple(self) -> int:
        """Input extents must be divisible by this (one pool per gap)."""
        return 2 ** (self.block_count - 1)

    def check_image(self, image: np.ndarray) -> None:
        if image.ndim != 3 or image.shape[0] != self.in_channels:
            raise ValueError(
                f"expected image [{self.in_channels},H,W], got shape {image.shape}")
        m = self.size_multiple
        _, h, w = image.shape
        if h % m or w % m:
            raise ValueError(
                f"image extents {h}x{w} must be divisible by {m} "
                f"({self.block_count} blocks)")

    def conv_spec(self) -> ConvSpec:
        return ConvSpec(self.kernel, self.kernel, stride=1, padding=self.kernel // 2)


@dataclass
class ModelParams:
    """Per-block conv weights/biases plus the 1x1 head."""

    block_weights: list[np.ndarray]
    block_biases: list[np.ndarray]
    head_weight: np.ndarray  # [CLASS_COUNT, sum(channels), 1, 1]
    head_bias: np.ndarray    # [CLASS_COUNT]

    def arrays(self) -> list[np.ndarray]:
        """All parameter tensors in a fixed serialization order."""
        out: list[np.ndarray] = []
        for w, b in zip(self.block_weights, self.block_biases):
            out.extend((w, b))
        out.extend((self.head_weight, self.head_bias))
        return out


def init_params(cfg: EncoderConfig, seed: int) -> ModelParams:
    """Uniform [-a, a] weights with a = sqrt(6 / fan_in); zero biases.

    Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    c_in = cfg.in_channels
    k = cfg.kernel
    for c_out in cfg.channels:
        a = np.sqrt(6.0 / (c_in * k * k))
        weights.append(rng.uniform(-a, a, size=(c_out, c_in, k, k)))
        biases.append(np.zeros(c_out))
        c_in = c_out
    a = np.sqrt(6.0 / cfg.hypercolumn_channels)
    head_w = rng.uniform(-a, a, size=(CLASS_COUNT, cfg.hypercolumn_channels, 1, 1))
    return ModelParams(weights, biases, head_w, np.zeros(CLASS_COUNT))


def check_params(params: ModelParams, cfg: EncoderConfig) -> None:
    """Verify parameter shapes against a config, naming the offending block."""
    if len(params.block_weights) != cfg.block_count:
        raise ValueError(
            f"params have {len(params.block_weights)} blocks, config expects "
            f"{cfg.block_count}")
    c_in = cfg.in_channels
    k = cfg.kernel
    for i, (w, b, c_out) in enumerate(zip(params.block_weights,
                                          params.block_biases, cfg.channels)):
        expect = (c_out, c_in, k, k)
        if w.shape != expect:
            raise ValueError(f"block {i + 1} weight shape {w.shape}, expected {expect}")
        if b.shape != (c_out,):
            raise ValueError(f"block {i + 1} bias shape {b.shape}, expected {(c_out,)}")
        c_in = c_out
    expect = (CLASS_COUNT, cfg.hypercolumn_channels, 1, 1)
    if params.head_weight.shape != expect:
        raise ValueError(f"head weight shape {params.head_weight.shape}, "
                         f"expected {expect}")
    if params.head_bias.shape != (CLASS_COUNT,):
        raise ValueError(f"head bias shape {params.head_bias.shape}, "
                         f"expected {(CLASS_COUNT,)}")


_HEAD_SPEC = ConvSpec(1, 1, stride=1, padding=0)


@dataclass
class ForwardCache:
    """Intermediates retained for the backward pass."""

    image: np.ndarray
    block_inputs: list[np.ndarray]   # conv input per block
    pre_acts: list[np.ndarray]       # conv output per block (pre-relu)
    taps: list[np.ndarray]           # post-relu activations (pre-pool)
    pool_argmax: list[np.ndarray]    # one per pooled gap
    hypercolumn: np.ndarray
    probs: np.ndarray


def forward(params: ModelParams, cfg: EncoderConfig,
            image: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run the network; returns ([4,H,W] probabilities, cache)."""
    image = as_f64(image)
    cfg.check_image(image)
    check_params(params, cfg)
    spec = cfg.conv_spec()
    h, w = image.shape[1], image.shape[2]

    x = image
    block_inputs, pre_acts, taps, pool_argmax = [], [], [], []
    for i in range(cfg.block_count):
        block_inputs.append(x)
        z = ops.conv2d(x, params.block_weights[i], params.block_biases[i], spec)
        a = ops.relu(z)
        pre_acts.append(z)
        taps.append(a)
        if i + 1 < cfg.block_count:
            x, argmax = ops.maxpool2d(a)
            pool_argmax.append(argmax)

    resized = [ops.bilinear_resize(a, h, w) for a in taps]
    hyper = ops.concat_channels(resized)
    logits = ops.conv2d(hyper, params.head_weight, params.head_bias, _HEAD_SPEC)
    probs = ops.sigmoid(logits)
    cache = ForwardCache(image, block_inputs, pre_acts, taps, pool_argmax,
                         hyper, probs)
    return probs, cache


def backward(params: ModelParams, cfg: EncoderConfig, cache: ForwardCache,
             grad_probs: np.ndarray) -> tuple[ModelParams, np.ndarray]:
    """Exact gradients of sum(grad_probs * probs) w.r.t. params and image.

    Returns (grad_params, grad_image); grad_params reuses the ModelParams
    container.
    """
    grad_probs = as_f64(grad_probs)
    if grad_probs.shape != cache.probs.shape:
        raise ValueError(
            f"grad_probs shape {grad_probs.shape} does not match cached "
            f"output shape {cache.probs.shape}")

    g_logits = ops.sigmoid_backward(cache.probs, grad_probs)
    g_hyper, g_head_w, g_head_b = ops.conv2d_backward(
        cache.hypercolumn, params.head_weight, _HEAD_SPEC, g_logits)
    g_resized = ops.split_channels(g_hyper, list(cfg.channels))

    spec = cfg.conv_spec()
    g_weights: list[np.ndarray] = [None] * cfg.block_count  # type: ignore[list-item]
    g_biases: list[np.ndarray] = [None] * cfg.block_count   # type: ignore[list-item]
    g_from_pool: np.ndarray | None = None
    for i in reversed(range(cfg.block_count)):
        tap = cache.taps[i]
        g_tap = ops.bilinear_resize_backward(g_resized[i], tap.shape[1], tap.shape[2])
        if g_from_pool is not None:
            g_tap = g_tap + g_from_pool
        g_z = ops.relu_backward(cache.pre_acts[i], g_tap)
        g_x, g_w, g_b = ops.conv2d_backward(cache.block_inputs[i],
                                            params.block_weights[i], spec, g_z)
        g_weights[i], g_biases[i] = g_w, g_b
        if i > 0:
            prev_tap = cache.taps[i - 1]
            g_from_pool = ops.maxpool2d_backward(cache.pool_argmax[i - 1], g_x,
                                                 prev_tap.shape)
    grad_params = ModelParams(g_weights, g_biases, g_head_w, g_head_b)
    return grad_params, g_x


def param_shapes(cfg: EncoderConfig) -> list[tuple[int, ...]]:
    """Tensor shapes in serialization order (block weight/bias pairs, head)."""
    shapes: list[tuple[int, ...]] = []
    c_in = cfg.in_channels
    for c_out in cfg.channels:
        shapes.append((c_out, c_in, cfg.kernel, cfg.kernel))
        shapes.append((c_out,))
        c_in = c_out
    shapes.append((CLASS_COUNT, cfg.hypercolumn_channels, 1, 1))
    shapes.append((CLASS_COUNT,))
    return shapes


def flatten_params(params: ModelParams) -> np.ndarray:
    """Concatenate all parameter tensors into one flat vector."""
    return np.concatenate([a.ravel() for a in params.arrays()])


def unflatten_params(cfg: EncoderConfig, vec: np.ndarray) -> ModelParams:
    """Rebuild a ModelParams with cfg's shapes from a flat vector."""
    vec = as_f64(vec)
    arrays, offset = [], 0
    for shape in param_shapes(cfg):
        size = int(np.prod(shape))
        arrays.append(vec[offset:offset + size].reshape(shape).copy())
        offset += size
    if offset != vec.size:
        raise ValueError(f"flat vector has {vec.size} entries, config needs {offset}")
    n = cfg.block_count
    return ModelParams(arrays[0:2 * n:2], arrays[1:2 * n:2],
                       arrays[2 * n], arrays[2 * n + 1])


def save_params(params: ModelParams, cfg: EncoderConfig,
                path: str | os.PathLike) -> None:
    """Write magic, length-prefixed JSON header, then raw LE float64 data."""
    check_params(params, cfg)
    tensors = []
    names = []
    for i in range(cfg.block_count):
        names.extend((f"block{i + 1}.weight", f"block{i + 1}.bias"))
    names.extend(("head.weight", "head.bias"))
    for name, arr in zip(names, params.arrays()):
        tensors.append({"name": name, "shape": list(arr.shape)})
    header = {
        "in_channels": cfg.in_channels,
        "channels": list(cfg.channels),
        "kernel": cfg.kernel,
        "class_names": list(CLASS_NAMES),
        "tensors": tensors,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in params.arrays():
            fh.write(arr.astype("<f8").tobytes())


def load_params(path: str | os.PathLike,
                cfg: EncoderConfig | None = None
                ) -> tuple[ModelParams, EncoderConfig]:
    """Read a weights file; verifies magic, header, and payload sizes.

    If cfg is given, the stored geometry must match it exactly.
    """
    spath = os.fspath(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(WEIGHTS_MAGIC))
        if magic != WEIGHTS_MAGIC:
            raise ValueError(f"{spath}: bad magic {magic!r}, expected "
                             f"{WEIGHTS_MAGIC!r}")
        raw_len = fh.read(8)
        if len(raw_len) != 8:
            raise ValueError(f"{spath}: truncated header length")
        (header_len,) = struct.unpack("<Q", raw_len)
        blob = fh.read(header_len)
        if len(blob) != header_len:
            raise ValueError(f"{spath}: truncated header")
        header = json.loads(blob.decode("utf-8"))
        file_cfg = EncoderConfig(channels=tuple(header["channels"]),
                                 in_channels=int(header["in_channels"]),
                                 kernel=int(header["kernel"]))
        if tuple(header["class_names"]) != CLASS_NAMES:
            raise ValueError(f"{spath}: class names {header['class_names']} "
                             f"do not match {list(CLASS_NAMES)}")
        arrays = []
        for entry in header["tensors"]:
            shape = tuple(int(s) for s in entry["shape"])
            count = int(np.prod(shape))
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"{spath}: truncated tensor {entry['name']!r}")
            arrays.append(np.frombuffer(raw, dtype="<f8").reshape(shape).copy())
    n = file_cfg.block_count
    params = ModelParams(arrays[0:2 * n:2], arrays[1:2 * n:2],
                         arrays[2 * n], arrays[2 * n + 1])
    check_params(params, file_cfg)
    if cfg is not None:
        if tuple(cfg.channels) != tuple(file_cfg.channels):
            detail = f"file has {n} blocks, config expects {cfg.block_count}"
            for i, (a, b) in enumerate(zip(file_cfg.channels, cfg.channels)):
                if a != b:
                    detail = f"block {i + 1} has {a} channels, config expects {b}"
                    break
            if n < cfg.block_count:
                detail = f"block {n + 1} missing from file"
            raise ValueError(f"{spath}: {detail}")
        check_params(params, cfg)
    return params, file_cfg
