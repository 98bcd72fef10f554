"""Layers with explicit forward/backward passes on float64 numpy arrays.

``forward`` returns ``(output, cache)`` and never mutates the layer, so a
model is safe to share once trained. ``backward`` takes that cache and the
upstream gradient and returns ``(grad_input, param_grads)`` with one entry
per array in ``params``.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: list[np.ndarray] = []

    def forward(self, x):
        raise NotImplementedError

    def backward(self, cache, grad):
        raise NotImplementedError

    def output_shape(self, shape: tuple) -> tuple:
        return shape

    def manifest(self) -> dict:
        return {"kind": self.kind}


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features: int, units: int, rng: np.random.Generator | None = None):
        super().__init__()
        if in_features < 1 or units < 1:
            raise ShapeError("dense layer dimensions must be positive")
        rng = rng or np.random.default_rng(0)
        self.in_features = in_features
        self.units = units
        self.params = [glorot_uniform(rng, in_features, units, (in_features, units)), np.zeros(units)]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"dense expects (batch, {self.in_features}), got {x.shape}")
        w, b = self.params
        return x @ w + b, x

    def backward(self, cache, grad):
        w, _ = self.params
        return grad @ w.T, [cache.T @ grad, grad.sum(axis=0)]

    def output_shape(self, shape):
        return (self.units,)

    def manifest(self):
        return {"kind": self.kind, "in": self.in_features, "units": self.units}


class Conv1D(Layer):
    """Valid 1-D convolution over (batch, length, channels).

    A 2-D (batch, length) input is read as a single-channel sequence.
    """

    kind = "conv1d"

    def __init__(self, length: int, in_channels: int, filters: int, kernel: int, stride: int = 1,
                 rng: np.random.Generator | None = None):
        super().__init__()
        if min(length, in_channels, filters, kernel, stride) < 1:
            raise ShapeError("conv1d dimensions must be positive")
        if kernel > length:
            raise ShapeError(f"kernel {kernel} longer than input length {length}")
        rng = rng or np.random.default_rng(0)
        self.length = length
        self.in_channels = in_channels
        self.filters = filters
        self.kernel = kernel
        self.stride = stride
        self.out_length = (length - kernel) // stride + 1
        fan_in, fan_out = kernel * in_channels, kernel * filters
        self.params = [glorot_uniform(rng, fan_in, fan_out, (kernel, in_channels, filters)), np.zeros(filters)]
        self._taps = stride * np.arange(self.out_length)[:, None] + np.arange(kernel)[None, :]

    def forward(self, x):
        squeeze = x.ndim == 2
        if squeeze:
            x = x[:, :, None]
        if x.shape[1:] != (self.length, self.in_channels):
            raise ShapeError(f"conv1d expects (batch, {self.length}, {self.in_channels}), got {x.shape}")
        w, b = self.params
        patches = x[:, self._taps, :].reshape(x.shape[0], self.out_length, -1)
        out = patches @ w.reshape(-1, self.filters) + b
        return out, (patches, squeeze)

    def backward(self, cache, grad):
        patches, squeeze = cache
        w, _ = self.params
        batch = grad.shape[0]
        dw = np.einsum("blk,blf->kf", patches, grad).reshape(w.shape)
        db = grad.sum(axis=(0, 1))
        dpatches = (grad @ w.reshape(-1, self.filters).T).reshape(batch, self.out_length, self.kernel, self.in_channels)
        dx = np.zeros((batch, self.length, self.in_channels))
        for k in range(self.kernel):
            dx[:, self._taps[:, k], :] += dpatches[:, :, k, :]
        return (dx[:, :, 0] if squeeze else dx), [dw, db]

    def output_shape(self, shape):
        return (self.out_length, self.filters)

    def manifest(self):
        return {"kind": self.kind, "length": self.length, "in_channels": self.in_channels,
                "filters": self.filters, "kernel": self.kernel, "stride": self.stride}


def _sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


ACTIVATIONS = ("relu", "sigmoid", "silu", "tanh", "linear")


class Activation(Layer):
    kind = "activation"

    def __init__(self, name: str):
        super().__init__()
        if name not in ACTIVATIONS:
            raise ValueError(f"unknown activation {name!r}; choose from {ACTIVATIONS}")
        self.name = name

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if self.name == "relu":
            return np.maximum(x, 0.0), x
        if self.name == "sigmoid":
            s = _sigmoid(x)
            return s, s
        if self.name == "silu":
            s = _sigmoid(x)
            return x * s, (x, s)
        if self.name == "tanh":
            t = np.tanh(x)
            return t, t
        return x, None

    def backward(self, cache, grad):
        if self.name == "relu":
            return grad * (cache > 0), []
        if self.name == "sigmoid":
            return grad * cache * (1.0 - cache), []
        if self.name == "silu":
            x, s = cache
            return grad * (s * (1.0 + x * (1.0 - s))), []
        if self.name == "tanh":
            return grad * (1.0 - cache ** 2), []
        return grad, []

    def manifest(self):
        return {"kind": self.kind, "name": self.name}


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, cache, grad):
        return grad.reshape(cache), []

    def output_shape(self, shape):
        return (int(np.prod(shape)),)


class Sequential(Layer):
    kind = "sequential"

    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)
        self.params = [p for layer in self.layers for p in layer.params]

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, caches, grad):
        grads: list[np.ndarray] = []
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            grad, layer_grads = layer.backward(cache, grad)
            grads = layer_grads + grads
        return grad, grads

    def output_shape(self, shape):
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    def manifest(self):
        return {"kind": self.kind, "layers": [layer.manifest() for layer in self.layers]}


class Concat(Layer):
    """Run ``inner`` on the input and concatenate ``[input, inner(input)]`` on the last axis."""

    kind = "concat"

    def __init__(self, inner: Layer, in_features: int):
        super().__init__()
        self.inner = inner
        self.in_features = in_features
        self.params = list(inner.params)

    def forward(self, x):
        out, cache = self.inner.forward(x)
        return np.concatenate([x, out], axis=-1), cache

    def backward(self, cache, grad):
        skip, through = grad[..., :self.in_features], grad[..., self.in_features:]
        dx, grads = self.inner.backward(cache, through)
        return skip + dx, grads

    def output_shape(self, shape):
        inner = self.inner.output_shape(shape)
        return shape[:-1] + (shape[-1] + inner[-1],)

    def manifest(self):
        return {"kind": self.kind, "in": self.in_features, "inner": self.inner.manifest()}


def layer_from_manifest(spec: dict) -> Layer:
    """Rebuild an (uninitialised) layer tree from ``Layer.manifest()`` output."""
    kind = spec["kind"]
    if kind == "dense":
        return Dense(spec["in"], spec["units"])
    if kind == "conv1d":
        return Conv1D(spec["length"], spec["in_channels"], spec["filters"], spec["kernel"], spec["stride"])
    if kind == "activation":
        return Activation(spec["name"])
    if kind == "flatten":
        return Flatten()
    if kind == "sequential":
        return Sequential([layer_from_manifest(s) for s in spec["layers"]])
    if kind == "concat":
        return Concat(layer_from_manifest(spec["inner"]), spec["in"])
    raise ValueError(f"unknown layer kind {kind!r}")
