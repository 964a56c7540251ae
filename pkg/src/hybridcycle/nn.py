"""Minimal feedforward network engine with reverse-mode gradients.

Four-layer fully connected nets (input, two hidden, output) with ReLU on the
hidden layers and identity output. Plain mini-batch gradient descent with
step decay; no momentum. Everything is float64 and seeded, so identical
(seed, data, config) reproduce identical parameters bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, SchemaError
from .textio import fmt_row

HIDDEN_WIDTH = 64


@dataclass
class Mlp:
    layer_dims: list
    weights: list  # per layer, shape (out, in)
    biases: list  # per layer, shape (out,)

    def __post_init__(self):
        dims = self.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise SchemaError("layer count mismatch")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[k + 1], dims[k]) or b.shape != (dims[k + 1],):
                raise SchemaError(f"layer {k}: weight shape {w.shape} incompatible with dims {dims}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise SchemaError(f"layer {k}: non-finite parameters")

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass
class MlpGrads:
    weights: list
    biases: list

    def scaled(self, a: float) -> "MlpGrads":
        return MlpGrads([a * w for w in self.weights], [a * b for b in self.biases])

    def add_(self, other: "MlpGrads") -> None:
        for w, ow in zip(self.weights, other.weights):
            w += ow
        for b, ob in zip(self.biases, other.biases):
            b += ob


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    learning_rate: float = 1e-3
    decay_factor: float = 0.1  # lr multiplied by (1 - decay_factor)
    decay_every_epochs: int = 100
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.epochs <= 0 or self.learning_rate <= 0.0 or self.batch_size <= 0:
            raise SchemaError("epochs, learning_rate and batch_size must be positive")
        if not (0.0 < self.decay_factor <= 1.0):
            raise SchemaError("decay_factor in (0, 1]")


def init_mlp(dims, seed) -> Mlp:
    """He-style uniform init scaled by fan-in; zero biases; seeded."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(list(dims), weights, biases)


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Evaluate on a vector (d,) or batch (n, d)."""
    y, _ = forward_cached(net, np.atleast_2d(np.asarray(x, dtype=float)))
    return y[0] if np.asarray(x).ndim == 1 else y


def forward_cached(net: Mlp, x: np.ndarray):
    """Batch forward keeping activations for backward."""
    if x.ndim != 2 or x.shape[1] != net.layer_dims[0]:
        raise SchemaError(f"input shape {x.shape} incompatible with dims {net.layer_dims}")
    acts = [x]
    n_layers = len(net.weights)
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w.T + b
        acts.append(np.maximum(z, 0.0) if k < n_layers - 1 else z)
    return acts[-1], acts


def backward(net: Mlp, acts, upstream: np.ndarray):
    """Parameter gradients plus input gradients for an upstream dL/dy batch."""
    if upstream.shape != acts[-1].shape:
        raise SchemaError(f"upstream shape {upstream.shape} mismatches output {acts[-1].shape}")
    d_w = [None] * len(net.weights)
    d_b = [None] * len(net.weights)
    delta = upstream
    for k in range(len(net.weights) - 1, -1, -1):
        d_w[k] = delta.T @ acts[k]
        d_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ net.weights[k]) * (acts[k] > 0.0)
    d_x = delta @ net.weights[0]
    return MlpGrads(d_w, d_b), d_x


def sgd_step(net: Mlp, grads: MlpGrads, lr: float) -> Mlp:
    for w, dw in zip(net.weights, grads.weights):
        w -= lr * dw
    for b, db in zip(net.biases, grads.biases):
        b -= lr * db
    return net


@dataclass
class AdamState:
    """First/second moment accumulators for one net."""

    m: list
    v: list
    t: int = 0

    @classmethod
    def for_net(cls, net: Mlp) -> "AdamState":
        params = net.weights + net.biases
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(net: Mlp, grads: MlpGrads, state: AdamState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8) -> Mlp:
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    params = net.weights + net.biases
    gs = grads.weights + grads.biases
    for p, g, m, v in zip(params, gs, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return net


def train(nets: dict, loss_fn, data, cfg: TrainConfig, eval_fn=None, optimizer: str = "adam"):
    """Mini-batch training over a dict of nets.

    loss_fn(nets, x_batch, y_batch) -> (loss, {name: MlpGrads}, parts dict).
    data is (X, Y). Shuffling is driven solely by cfg.seed. optimizer is
    'adam' (default; the relative losses are badly scaled for a fixed-step
    rule) or 'sgd'. Returns the nets and a history list, one record per epoch.
    """
    x, y = data
    n = len(x)
    if n == 0:
        return nets, []
    if optimizer not in ("adam", "sgd"):
        raise SchemaError(f"unknown optimizer {optimizer!r}")
    rng = np.random.default_rng(cfg.seed)
    lr = cfg.learning_rate
    adam = {name: AdamState.for_net(net) for name, net in nets.items()} if optimizer == "adam" else None
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        parts_sum: dict = {}
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads, parts = loss_fn(nets, x[idx], y[idx])
            if not np.isfinite(loss):
                raise DivergenceError(epoch, f"non-finite loss {loss} at epoch {epoch}")
            for name, g in grads.items():
                if adam is None:
                    sgd_step(nets[name], g, lr)
                else:
                    adam_step(nets[name], g, adam[name], lr)
            total += loss
            for key, value in parts.items():
                parts_sum[key] = parts_sum.get(key, 0.0) + value
            n_batches += 1
        record = {"epoch": epoch, "loss": total / n_batches, "lr": lr}
        for key, value in parts_sum.items():
            record[key] = value / n_batches
        if eval_fn is not None:
            record.update(eval_fn(nets, epoch))
        history.append(record)
        if epoch % cfg.decay_every_epochs == 0:
            lr *= 1.0 - cfg.decay_factor
    return nets, history


# ---------------------------------------------------------------------------
# normalization and checkpoint text blocks


@dataclass
class Normalizer:
    """Per-feature affine standardization, frozen after fitting."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Normalizer":
        std = x.std(axis=0)
        return cls(mean=x.mean(axis=0), std=np.maximum(std, 1e-12))

    def encode(self, x):
        return (x - self.mean) / self.std

    def decode(self, y):
        return y * self.std + self.mean


def mlp_to_lines(net: Mlp, norm_in: Normalizer, norm_out: Normalizer) -> list:
    lines = ["dims " + " ".join(str(d) for d in net.layer_dims)]
    lines.append("in_mean " + fmt_row(norm_in.mean))
    lines.append("in_std " + fmt_row(norm_in.std))
    lines.append("out_mean " + fmt_row(norm_out.mean))
    lines.append("out_std " + fmt_row(norm_out.std))
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        lines.append(f"W{k} {w.shape[0]} {w.shape[1]}")
        lines.extend(fmt_row(row) for row in w)
        lines.append(f"b{k}")
        lines.append(fmt_row(b))
    return lines


def mlp_from_lines(lines: list):
    it = iter(lines)

    def expect(prefix):
        row = next(it, None)
        if row is None or not row.startswith(prefix):
            raise SchemaError(f"checkpoint: expected {prefix!r}, found {row!r}")
        return row

    dims = [int(tok) for tok in expect("dims").split()[1:]]
    vecs = {}
    for key in ("in_mean", "in_std", "out_mean", "out_std"):
        vecs[key] = np.array([float(tok) for tok in expect(key).split()[1:]])
    weights, biases = [], []
    for k in range(len(dims) - 1):
        head = expect(f"W{k} ").split()
        rows, cols = int(head[1]), int(head[2])
        w = np.empty((rows, cols))
        for i in range(rows):
            w[i] = [float(tok) for tok in next(it).split()]
        expect(f"b{k}")
        biases.append(np.array([float(tok) for tok in next(it).split()]))
        weights.append(w)
    net = Mlp(dims, weights, biases)
    return net, Normalizer(vecs["in_mean"], vecs["in_std"]), Normalizer(vecs["out_mean"], vecs["out_std"])
