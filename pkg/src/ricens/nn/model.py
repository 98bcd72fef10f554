"""Scalar-output networks, optimisers, training loop and gradient checking."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .layers import Layer, Sequential
from .losses import LossKind


class TrainingError(RuntimeError):
    pass


class Network:
    """A layer graph mapping (batch, n_features) to one scalar per row."""

    kind = "network"

    def __init__(self, body: Layer, n_features: int):
        self.body = body
        self.n_features = n_features

    @property
    def params(self) -> list[np.ndarray]:
        return self.body.params

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ValueError(f"expected input of shape (batch, {self.n_features}), got {x.shape}")
        return x

    def predict(self, x) -> np.ndarray:
        out, _ = self.body.forward(self._check(x))
        return out[:, 0]

    def loss_and_grads(self, x, y, loss: LossKind) -> tuple[float, list[np.ndarray]]:
        x = self._check(x)
        out, cache = self.body.forward(x)
        value, grad = loss(out[:, 0], np.asarray(y, dtype=float))
        _, grads = self.body.backward(cache, grad[:, None])
        return value, grads

    def residuals(self, x, y) -> np.ndarray:
        return self.predict(x) - np.asarray(y, dtype=float)

    def manifest(self) -> dict:
        return {"kind": self.kind, "n_features": self.n_features, "body": self.body.manifest()}


class AutoencoderNetwork(Network):
    """Encoder/decoder pair with a regression head on the bottleneck.

    Training loss is ``loss(head) + recon_weight * mse(decoder, input)``.
    """

    kind = "autoencoder"

    def __init__(self, encoder: Sequential, decoder: Sequential, head: Sequential, n_features: int,
                 recon_weight: float = 0.5):
        self.encoder = encoder
        self.decoder = decoder
        self.head = head
        self.n_features = n_features
        self.recon_weight = recon_weight
        self.body = Sequential(encoder.layers + head.layers)

    @property
    def params(self):
        return self.encoder.params + self.decoder.params + self.head.params

    def reconstruct(self, x) -> np.ndarray:
        code, _ = self.encoder.forward(self._check(x))
        return self.decoder.forward(code)[0]

    def loss_and_grads(self, x, y, loss: LossKind):
        x = self._check(x)
        code, enc_cache = self.encoder.forward(x)
        out, head_cache = self.head.forward(code)
        recon, dec_cache = self.decoder.forward(code)
        reg_value, reg_grad = loss(out[:, 0], np.asarray(y, dtype=float))
        diff = recon - x
        recon_value = float(np.mean(diff * diff))
        d_code_head, head_grads = self.head.backward(head_cache, reg_grad[:, None])
        d_code_dec, dec_grads = self.decoder.backward(dec_cache, self.recon_weight * 2.0 * diff / diff.size)
        _, enc_grads = self.encoder.backward(enc_cache, d_code_head + d_code_dec)
        return reg_value + self.recon_weight * recon_value, enc_grads + dec_grads + head_grads

    def manifest(self):
        return {"kind": self.kind, "n_features": self.n_features, "recon_weight": self.recon_weight,
                "encoder": self.encoder.manifest(), "decoder": self.decoder.manifest(),
                "head": self.head.manifest()}


def forward(model: Network, x) -> np.ndarray:
    return model.predict(x)


@dataclass(frozen=True)
class OptimizerSpec:
    name: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.name not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.name!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be > 0")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    patience: int = 20

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class _Sgd:
    def __init__(self, spec, params):
        self.spec = spec
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        for p, g, v in zip(params, grads, self.velocity):
            v *= self.spec.momentum
            v -= self.spec.lr * g
            p += v


class _Adam:
    def __init__(self, spec, params):
        self.spec = spec
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        s = self.spec
        self.t += 1
        c1 = 1.0 - s.beta1 ** self.t
        c2 = 1.0 - s.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * g * g
            p -= s.lr * (m / c1) / (np.sqrt(v / c2) + s.eps)


@dataclass
class TrainedModel:
    model: Network
    loss: LossKind
    history: list[float]
    val_history: list[float]
    best_epoch: int

    def predict(self, x) -> np.ndarray:
        return self.model.predict(x)


def fit(model: Network, x, y, config: TrainConfig, loss: LossKind = LossKind(), validation=None) -> TrainedModel:
    """Mini-batch training with optional early stopping on ``validation``.

    ``model`` is trained on a private copy and the copy is returned inside the
    result. With a validation set the parameters from the best validation
    epoch are restored once patience runs out.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("cannot fit on an empty dataset")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise ValueError("training data must be finite")
    model = copy.deepcopy(model)
    params = model.params
    opt = (_Adam if config.optimizer.name == "adam" else _Sgd)(config.optimizer, params)
    rng = np.random.default_rng(config.seed)
    n = x.shape[0]

    history: list[float] = []
    val_history: list[float] = []
    best = (np.inf, [p.copy() for p in params], 0)
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            value, grads = model.loss_and_grads(x[idx], y[idx], loss)
            if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingError(f"non-finite loss or gradient at epoch {epoch}")
            opt.step(params, grads)
            total += value * len(idx)
        history.append(total / n)

        if validation is not None:
            xv, yv = validation
            val_loss, _ = loss(model.predict(xv), np.asarray(yv, dtype=float))
            if not np.isfinite(val_loss):
                raise TrainingError(f"non-finite validation loss at epoch {epoch}")
            val_history.append(val_loss)
            if val_loss < best[0]:
                best = (val_loss, [p.copy() for p in params], epoch)
                stale = 0
            else:
                stale += 1
                if config.patience and stale >= config.patience:
                    break

    best_epoch = len(history)
    if validation is not None:
        for p, saved in zip(params, best[1]):
            p[...] = saved
        best_epoch = best[2]
    return TrainedModel(model, loss, history, val_history, best_epoch)


def _kink_free_rows(model: Network, x, y, loss: LossKind, margin: float) -> np.ndarray:
    return loss.kink_distance(model.residuals(x, y)) > margin


def gradient_check(model: Network, loss: LossKind, x, y, step: float = 1e-5,
                   kink_margin: float = 1e-4, floor: float = 1e-6) -> float:
    """Largest elementwise relative error between backprop and central differences.

    Rows whose residual sits within ``kink_margin`` of a loss kink (MAE at
    zero residual) are left out, since the derivative does not exist there.
    Relative error is ``|a - n| / max(|a| + |n|, floor)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = _kink_free_rows(model, x, y, loss, kink_margin)
    x, y = x[keep], y[keep]
    if x.shape[0] == 0:
        raise ValueError("no kink-free rows left to check")
    _, analytic = model.loss_and_grads(x, y, loss)
    worst = 0.0
    for p, a in zip(model.params, analytic):
        flat = p.reshape(-1)
        grad_a = a.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            plus, _ = model.loss_and_grads(x, y, loss)
            flat[i] = saved - step
            minus, _ = model.loss_and_grads(x, y, loss)
            flat[i] = saved
            numeric = (plus - minus) / (2 * step)
            err = abs(grad_a[i] - numeric) / max(abs(grad_a[i]) + abs(numeric), floor)
            worst = max(worst, err)
    return worst


def network_from_manifest(spec: dict) -> Network:
    from .layers import layer_from_manifest

    if spec["kind"] == "autoencoder":
        return AutoencoderNetwork(
            layer_from_manifest(spec["encoder"]),
            layer_from_manifest(spec["decoder"]),
            layer_from_manifest(spec["head"]),
            spec["n_features"],
            spec["recon_weight"],
        )
    return Network(layer_from_manifest(spec["body"]), spec["n_features"])
