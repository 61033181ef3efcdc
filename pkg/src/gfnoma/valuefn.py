"""Fully connected Q-value network: ReLU hidden layers, linear outputs, RMSProp.

Checkpoint layout (all little-endian):

    4 bytes   magic b"GFQN"
    uint32    format version (1)
    uint32    number of layer dims n
    uint32*n  layer dims (input, hidden..., outputs)
    float64   for each layer: weights (fan_in x fan_out, row major), then biases
    float64   the RMSProp accumulators in the same order
"""
from __future__ import annotations

import copy
import os
import struct
from dataclasses import dataclass, field

import numpy as np

RMS_DECAY = 0.95
RMS_EPS = 1e-6

_MAGIC = b"GFQN"
_VERSION = 1


@dataclass
class ValueNet:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    rms_w: list[np.ndarray] = field(default_factory=list)
    rms_b: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.rms_w:
            self.rms_w = [np.zeros_like(w) for w in self.weights]
            self.rms_b = [np.zeros_like(b) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[i], self.layer_dims[i + 1]) or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i} shapes do not chain with dims {self.layer_dims}")

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype

    @property
    def n_actions(self) -> int:
        return self.layer_dims[-1]

    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass
class Minibatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminal: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class Gradient:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    loss: float = 0.0


def net_init(
    dims: tuple[int, ...] | list[int], rng: np.random.Generator, dtype=np.float64
) -> ValueNet:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"invalid layer dims {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return ValueNet(dims, weights, biases)


def _forward_cache(net: ValueNet, x: np.ndarray) -> list[np.ndarray]:
    """Layer inputs a_0 .. a_{L-1} followed by the output."""
    acts = [x]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w + b
        acts.append(z if i == last else np.maximum(z, 0.0))
    return acts


def forward(net: ValueNet, s: np.ndarray) -> np.ndarray:
    """Q-values for one state (1-d) or a batch of states (2-d)."""
    x = np.asarray(s, dtype=net.dtype)
    if x.shape[-1] != net.layer_dims[0]:
        raise ValueError(f"state has {x.shape[-1]} features, net expects {net.layer_dims[0]}")
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        x = x @ w + b
        if i < len(net.weights) - 1:
            x = np.maximum(x, 0.0)
    return x


def td_targets(
    online: ValueNet,
    target: ValueNet,
    batch: Minibatch,
    gamma: float,
    ddqn: bool,
    q_next_online: np.ndarray | None = None,
) -> np.ndarray:
    q_next = forward(target, batch.next_states)
    if ddqn:
        if q_next_online is None:
            q_next_online = forward(online, batch.next_states)
        a_star = q_next_online.argmax(axis=1)
    else:
        a_star = q_next.argmax(axis=1)
    boot = q_next[np.arange(len(batch)), a_star]
    return batch.rewards + gamma * np.where(batch.terminal, 0.0, boot)


def td_gradient(
    online: ValueNet, target: ValueNet, batch: Minibatch, gamma: float, ddqn: bool
) -> Gradient:
    """Gradient of the batch-mean of 0.5 * (y - Q(s, a))**2 w.r.t. the online net.

    Targets ``y`` are constants. With ``ddqn`` the bootstrap action is picked by
    the online net and valued by the target net; otherwise both use the target.
    """
    n = len(batch)
    if ddqn:
        # one online pass over s and s' together; only the s rows are backpropagated
        both = _forward_cache(online, np.concatenate([batch.states, batch.next_states]))
        acts = [a[:n] for a in both]
        y = td_targets(online, target, batch, gamma, ddqn, q_next_online=both[-1][n:])
    else:
        acts = _forward_cache(online, np.asarray(batch.states, dtype=online.dtype))
        y = td_targets(online, target, batch, gamma, ddqn)
    rows = np.arange(n)
    delta = acts[-1][rows, batch.actions] - y
    g = np.zeros_like(acts[-1])
    g[rows, batch.actions] = delta / n
    grads_w: list[np.ndarray] = [None] * len(online.weights)  # type: ignore[list-item]
    grads_b: list[np.ndarray] = [None] * len(online.weights)  # type: ignore[list-item]
    for i in range(len(online.weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ g
        grads_b[i] = g.sum(axis=0)
        if i:
            g = (g @ online.weights[i].T) * (acts[i] > 0)
    return Gradient(grads_w, grads_b, loss=float(0.5 * np.mean(delta**2)))


def rmsprop_step(net: ValueNet, grad: Gradient, lr: float) -> ValueNet:
    """In-place RMSProp update; returns ``net`` for chaining."""
    pairs = zip(net.weights + net.biases, net.rms_w + net.rms_b, grad.weights + grad.biases)
    for param, acc, g in pairs:
        acc *= RMS_DECAY
        acc += (1.0 - RMS_DECAY) * np.square(g)
        denom = np.sqrt(acc)
        denom += RMS_EPS
        param -= lr * g / denom
    return net


def copy_into_target(online: ValueNet) -> ValueNet:
    return copy.deepcopy(online)


def save_checkpoint(net: ValueNet, path: str | os.PathLike[str]) -> None:
    dims = net.layer_dims
    parts = [_MAGIC, struct.pack(f"<II{len(dims)}I", _VERSION, len(dims), *dims)]
    for group in ((net.weights, net.biases), (net.rms_w, net.rms_b)):
        for w, b in zip(*group):
            parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path: str | os.PathLike[str], dtype=np.float64) -> ValueNet:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a value-net checkpoint")
    version, n = struct.unpack_from("<II", data, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    dims = struct.unpack_from(f"<{n}I", data, 12)
    offset = 12 + 4 * n

    def take(shape: tuple[int, ...]) -> np.ndarray:
        nonlocal offset
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += 8 * count
        return arr.astype(dtype)

    layers = list(zip(dims[:-1], dims[1:]))
    weights, biases, rms_w, rms_b = [], [], [], []
    for dst_w, dst_b in ((weights, biases), (rms_w, rms_b)):
        for fan_in, fan_out in layers:
            dst_w.append(take((fan_in, fan_out)))
            dst_b.append(take((fan_out,)))
    if offset != len(data):
        raise ValueError(f"{path}: checkpoint size does not match its header")
    return ValueNet(tuple(dims), weights, biases, rms_w, rms_b)
