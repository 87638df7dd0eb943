"""Numpy layers with explicit forward/backward passes.

Activations use the layout (batch, channels, height, width) for images and
(batch, features) after flattening. Every layer stores what its backward
pass needs during ``forward`` and exposes parameters through ``params`` and
the matching gradients through ``grads``. Parameters listed in ``frozen``
are never updated and always report zero gradient.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Layer",
    "Dense",
    "Conv2D",
    "ReLU",
    "Flatten",
    "Dropout",
    "PadTo",
    "GraphProbes",
    "UpperTriangleMask",
    "he_uniform",
    "build_layer",
]

BIAS_INIT = 0.01


def he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.frozen: set[str] = set()

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray, need_dx: bool = True) -> np.ndarray | None:
        raise NotImplementedError

    def spec(self) -> dict:
        return {"kind": self.kind}

    def zero_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.spec().items() if k != "kind")
        return f"{type(self).__name__}({args})"


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        rng = rng or np.random.default_rng(0)
        self.params = {"w": he_uniform(rng, (n_in, n_out), n_in), "b": np.full(n_out, BIAS_INIT)}
        self.zero_grads()

    def forward(self, x, training=False):
        self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, dy, need_dx=True):
        self.grads["w"] = self._x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["w"].T if need_dx else None

    def spec(self):
        return {"kind": self.kind, "n_in": self.n_in, "n_out": self.n_out}


class Conv2D(Layer):
    """Valid (unpadded) cross-correlation with stride 1."""

    kind = "conv2d"

    def __init__(self, c_in: int, c_out: int, kernel: int = 3, rng: np.random.Generator | None = None):
        super().__init__()
        self.c_in, self.c_out, self.kernel = c_in, c_out, kernel
        rng = rng or np.random.default_rng(0)
        fan_in = c_in * kernel * kernel
        self.params = {
            "w": he_uniform(rng, (c_out, c_in, kernel, kernel), fan_in),
            "b": np.full(c_out, BIAS_INIT),
        }
        self.zero_grads()

    def forward(self, x, training=False):
        b, c, h, w = x.shape
        k = self.kernel
        if h < k or w < k:
            raise ValueError(f"input {h}x{w} smaller than kernel {k}x{k}")
        ho, wo = h - k + 1, w - k + 1
        win = sliding_window_view(x, (k, k), axis=(2, 3))  # (b, c, ho, wo, k, k)
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * k * k)
        self._cols, self._in_shape = cols, x.shape
        out = cols @ self.params["w"].reshape(self.c_out, -1).T + self.params["b"]
        return out.reshape(b, ho, wo, self.c_out).transpose(0, 3, 1, 2)

    def backward(self, dy, need_dx=True):
        b, c, h, w = self._in_shape
        k = self.kernel
        ho, wo = h - k + 1, w - k + 1
        dy2 = dy.transpose(0, 2, 3, 1).reshape(-1, self.c_out)
        self.grads["w"] = (dy2.T @ self._cols).reshape(self.params["w"].shape)
        self.grads["b"] = dy2.sum(axis=0)
        if not need_dx:
            return None
        dcols = (dy2 @ self.params["w"].reshape(self.c_out, -1)).reshape(b, ho, wo, c, k, k)
        dx = np.zeros(self._in_shape)
        for i in range(k):
            for j in range(k):
                dx[:, :, i : i + ho, j : j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dx

    def spec(self):
        return {"kind": self.kind, "c_in": self.c_in, "c_out": self.c_out, "kernel": self.kernel}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy, need_dx=True):
        return dy * self._mask


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy, need_dx=True):
        return dy.reshape(self._shape)


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1/(1 - rate) during training only."""

    kind = "dropout"

    def __init__(self, rate: float, rng: np.random.Generator | None = None):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng or np.random.default_rng(0)

    def forward(self, x, training=False):
        if not training or self.rate == 0.0:
            self._scale = None
            return x
        self._scale = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._scale

    def backward(self, dy, need_dx=True):
        return dy if self._scale is None else dy * self._scale

    def spec(self):
        return {"kind": self.kind, "rate": self.rate}


class PadTo(Layer):
    """Zero-pad (batch, n, n) or (batch, c, n, n) inputs to ``size`` nodes.

    Padding appends isolated nodes, so the graph itself is unchanged.
    """

    kind = "pad"

    def __init__(self, size: int):
        super().__init__()
        self.size = size

    def forward(self, x, training=False):
        n = x.shape[-1]
        self._n = n
        if n >= self.size:
            return x
        widths = [(0, 0)] * (x.ndim - 2) + [(0, self.size - n), (0, self.size - n)]
        return np.pad(x, widths)

    def backward(self, dy, need_dx=True):
        return dy[..., : self._n, : self._n]

    def spec(self):
        return {"kind": self.kind, "size": self.size}


class GraphProbes(Layer):
    """Fixed feature maps read off a batch of adjacency matrices (batch, n, n).

    Six output channels, each n x n:

    0. row of the initial node (who node 0 reaches), repeated down the rows
    1. column of the initial node, repeated across the columns
    2. row of the target node
    3. column of the target node
    4. edges weighted by the mean degree of their endpoints, divided by n - 1
    5. edge density 2|E| / (n(n-1)), constant over the map

    The probe vectors are parameters but frozen, so they never train.
    """

    kind = "graph_probes"
    channels = 6

    def __init__(self, n: int, initial: int = 0, target: int = 1):
        super().__init__()
        self.n = n
        probes = np.zeros((5, n))
        probes[0, initial] = probes[1, initial] = 1.0
        probes[2, target] = probes[3, target] = 1.0
        probes[4, :] = 1.0
        self.params = {"probes": probes}
        self.frozen = {"probes"}
        self.zero_grads()

    def forward(self, x, training=False):
        if x.ndim == 4:
            x = x[:, 0]
        b, n, _ = x.shape
        p = self.params["probes"]
        out = np.empty((b, 6, n, n))
        out[:, 0] = np.einsum("l,blj->bj", p[0], x)[:, None, :]
        out[:, 1] = np.einsum("bil,l->bi", x, p[1])[:, :, None]
        out[:, 2] = np.einsum("l,blj->bj", p[2], x)[:, None, :]
        out[:, 3] = np.einsum("bil,l->bi", x, p[3])[:, :, None]
        deg = np.einsum("bil,l->bi", x, p[4])
        out[:, 4] = x * (deg[:, :, None] + deg[:, None, :]) / (2.0 * max(n - 1, 1))
        density = x.sum(axis=(1, 2)) / max(n * (n - 1), 1)
        out[:, 5] = density[:, None, None]
        return out

    def backward(self, dy, need_dx=True):
        # input is data and the probes are frozen: nothing to propagate
        self.zero_grads()
        return None

    def spec(self):
        return {"kind": self.kind, "n": self.n}


class UpperTriangleMask(Layer):
    """Zero everything on or below the diagonal; an undirected adjacency holds
    each edge twice and the mask keeps one copy."""

    kind = "triu_mask"

    def __init__(self, n: int):
        super().__init__()
        self.n = n
        self._mask = np.triu(np.ones((n, n)), 1)

    def forward(self, x, training=False):
        return x * self._mask

    def backward(self, dy, need_dx=True):
        return dy * self._mask

    def spec(self):
        return {"kind": self.kind, "n": self.n}


_KINDS = {
    "dense": lambda s, rng: Dense(s["n_in"], s["n_out"], rng),
    "conv2d": lambda s, rng: Conv2D(s["c_in"], s["c_out"], s["kernel"], rng),
    "relu": lambda s, rng: ReLU(),
    "flatten": lambda s, rng: Flatten(),
    "dropout": lambda s, rng: Dropout(s["rate"], rng),
    "pad": lambda s, rng: PadTo(s["size"]),
    "graph_probes": lambda s, rng: GraphProbes(s["n"]),
    "triu_mask": lambda s, rng: UpperTriangleMask(s["n"]),
}


def build_layer(spec: dict, rng: np.random.Generator | None = None) -> Layer:
    try:
        return _KINDS[spec["kind"]](spec, rng or np.random.default_rng(0))
    except KeyError as exc:
        raise ValueError(f"unknown layer spec {spec!r}") from exc
