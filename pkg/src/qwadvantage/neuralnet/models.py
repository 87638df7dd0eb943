"""The three classifier architectures and a small sequential container."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from .layers import (
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    GraphProbes,
    Layer,
    PadTo,
    ReLU,
    UpperTriangleMask,
    build_layer,
)

__all__ = ["ARCHS", "Network", "ShapeError", "build_model", "softmax", "cross_entropy", "save_model", "load_model"]

ARCHS = ("fc", "cnn", "cqcnn")
FORMAT_VERSION = 1

FC_WIDTHS = (10, 10, 10)
CNN_CHANNELS_AFTER_FIRST = (10, 10, 10)
CNN_KERNEL = 3
CNN_DROPOUT = 0.2
# smallest input for which every valid 3x3 conv still has output
CNN_MIN_SIZE = 1 + 4 * (CNN_KERNEL - 1)
CQCNN_CHANNELS = 10
CQCNN_COMPRESSED = 4
CQCNN_MIN_SIZE = 1 + 2 * (CNN_KERNEL - 1)


class ShapeError(ValueError):
    pass


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-likelihood of integer labels ``y``."""
    p = probs[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.clip(p, 1e-300, None))))


class Network:
    """Layers applied in order to (batch, 1, n, n) inputs; softmax on the last output."""

    def __init__(self, arch: str, input_dim: int, layers: list[Layer], meta: dict | None = None):
        self.arch = arch
        self.input_dim = input_dim
        self.layers = layers
        self.meta = dict(meta or {})

    # -- passes -------------------------------------------------------------

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1:] != (self.input_dim, self.input_dim):
            raise ShapeError(
                f"{self.arch} model expects (batch, {self.input_dim}, {self.input_dim}) input, got {x.shape}"
            )
        return x[:, None]

    def logits(self, x, training: bool = False) -> np.ndarray:
        h = self._check(x)
        for layer in self.layers:
            h = layer.forward(h, training)
        return h

    def forward(self, x, training: bool = False) -> np.ndarray:
        """Class probabilities, one row per input matrix."""
        return softmax(self.logits(x, training))

    def predict(self, x, batch_size: int = 512) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.concatenate(
            [self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        ) if len(x) else np.zeros((0, 2))

    def loss_and_grads(self, x, y, training: bool = True) -> tuple[float, np.ndarray]:
        """Mean cross-entropy over the batch; fills every layer's ``grads``."""
        y = np.asarray(y, dtype=np.int64)
        probs = softmax(self.logits(x, training))
        loss = cross_entropy(probs, y)
        d = probs.copy()
        d[np.arange(len(y)), y] -= 1.0
        d /= len(y)
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            d = layer.backward(d, need_dx=idx > 0)
            if d is None:
                break
        for layer in self.layers:
            for name in layer.frozen:
                layer.grads[name] = np.zeros_like(layer.params[name])
        return loss, probs

    # -- parameters ---------------------------------------------------------

    def parameters(self, trainable_only: bool = False):
        """Yield ``(layer_index, name, layer)`` for every parameter array."""
        for i, layer in enumerate(self.layers):
            for name in layer.params:
                if trainable_only and name in layer.frozen:
                    continue
                yield i, name, layer

    def count_params(self, trainable_only: bool = True) -> int:
        return sum(layer.params[name].size for _, name, layer in self.parameters(trainable_only))

    def copy(self) -> Network:
        return copy.deepcopy(self)

    def layer_specs(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]

    def __repr__(self):
        body = "\n".join(f"  {layer!r}" for layer in self.layers)
        return f"Network(arch={self.arch!r}, input_dim={self.input_dim},\n{body}\n)"


def _dense_head(n_in: int, widths, rng) -> list[Layer]:
    layers: list[Layer] = []
    for w in widths:
        layers += [Dense(n_in, w, rng), ReLU()]
        n_in = w
    layers.append(Dense(n_in, 2, rng))
    return layers


def build_model(arch: str, n: int, rng_seed: int = 0) -> Network:
    """FC, CNN or CQCNN classifier for n x n adjacency inputs.

    CNN and CQCNN pad inputs smaller than their conv stack needs
    (9 and 5 nodes) with isolated nodes before the first convolution.
    """
    arch = arch.lower()
    if arch not in ARCHS:
        raise ValueError(f"unknown architecture {arch!r}; expected one of {ARCHS}")
    if n < 3:
        raise ShapeError(f"input size must be at least 3 nodes, got {n}")
    rng = np.random.default_rng(rng_seed)
    layers: list[Layer] = []
    if arch == "fc":
        layers = [Flatten(), *_dense_head(n * n, FC_WIDTHS, rng)]
    elif arch == "cnn":
        size = max(n, CNN_MIN_SIZE)
        if size > n:
            layers.append(PadTo(size))
        channels = (1, n, *CNN_CHANNELS_AFTER_FIRST)
        for c_in, c_out in zip(channels[:-1], channels[1:]):
            layers += [Conv2D(c_in, c_out, CNN_KERNEL, rng), ReLU()]
            size -= CNN_KERNEL - 1
        layers += [Dropout(CNN_DROPOUT, np.random.default_rng(rng.integers(2**63))), Flatten()]
        layers += _dense_head(channels[-1] * size * size, FC_WIDTHS, rng)
    else:
        size = max(n, CQCNN_MIN_SIZE)
        if size > n:
            layers.append(PadTo(size))
        layers += [GraphProbes(size), UpperTriangleMask(size)]
        layers += [Conv2D(GraphProbes.channels, CQCNN_CHANNELS, CNN_KERNEL, rng), ReLU()]
        layers += [Conv2D(CQCNN_CHANNELS, CQCNN_CHANNELS, CNN_KERNEL, rng), ReLU()]
        size -= 2 * (CNN_KERNEL - 1)
        layers += [Conv2D(CQCNN_CHANNELS, CQCNN_COMPRESSED, 1, rng), ReLU(), Flatten()]
        layers += _dense_head(CQCNN_COMPRESSED * size * size, (10,), rng)
    meta = {"init": "he_uniform", "bias_init": 0.01, "seed": rng_seed}
    return Network(arch, n, layers, meta)


# -- checkpoints ----------------------------------------------------------------


def save_model(model: Network, path) -> None:
    """JSON checkpoint: arch tag, layer specs, flattened weights and metadata."""
    weights = []
    for i, name, layer in model.parameters():
        arr = layer.params[name]
        weights.append({"layer": i, "name": name, "shape": list(arr.shape), "values": arr.ravel().tolist()})
    doc = {
        "format_version": FORMAT_VERSION,
        "arch": model.arch,
        "input_dim": model.input_dim,
        "layers": model.layer_specs(),
        "weights": weights,
        "meta": model.meta,
    }
    Path(path).write_text(json.dumps(doc))


def load_model(path) -> Network:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('format_version')!r}")
    layers = [build_layer(spec) for spec in doc["layers"]]
    for w in doc["weights"]:
        layers[w["layer"]].params[w["name"]] = np.asarray(w["values"], dtype=float).reshape(w["shape"])
    for layer in layers:
        layer.zero_grads()
    return Network(doc["arch"], doc["input_dim"], layers, doc.get("meta"))
