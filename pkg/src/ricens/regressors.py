"""The four ensemble members and an elastic-net baseline."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .nn import (
    Activation,
    AutoencoderNetwork,
    Concat,
    Conv1D,
    Dense,
    Flatten,
    LossKind,
    Network,
    Sequential,
    ShapeError,
    TrainConfig,
    fit,
)
from .nn.io import dumps, loads, network_from_bytes, network_to_bytes

log = logging.getLogger(__name__)

MEMBER_IDS = ("Dense", "AE", "MLP", "CNN")


@dataclass(frozen=True)
class MemberShape:
    """Architecture knobs; defaults give the shapes documented in the README."""

    mlp_units: tuple[int, ...] = (64, 32)
    mlp_activation: str = "relu"
    cnn_filters: tuple[int, ...] = (16, 8)
    cnn_kernel: int = 3
    cnn_activation: str = "relu"
    dense_blocks: int = 2
    dense_width: int = 32
    dense_activation: str = "relu"
    ae_bottleneck: int = 8
    ae_activation: str = "silu"
    ae_recon_weight: float = 0.5


def build_member(member: str, n_features: int, seed: int = 0, shape: MemberShape = MemberShape()) -> Network:
    """Untrained network for one member id, initialised from ``seed``."""
    if n_features < 1:
        raise ShapeError("need at least one input feature")
    rng = np.random.default_rng(seed)
    if member == "MLP":
        layers, width = [], n_features
        for units in shape.mlp_units:
            layers += [Dense(width, units, rng), Activation(shape.mlp_activation)]
            width = units
        layers.append(Dense(width, 1, rng))
        return Network(Sequential(layers), n_features)
    if member == "CNN":
        span = len(shape.cnn_filters) * (shape.cnn_kernel - 1) + 1
        if n_features < span:
            raise ShapeError(f"CNN needs at least {span} features, got {n_features}")
        layers, length, channels = [], n_features, 1
        for filters in shape.cnn_filters:
            conv = Conv1D(length, channels, filters, shape.cnn_kernel, 1, rng)
            layers += [conv, Activation(shape.cnn_activation)]
            length, channels = conv.out_length, filters
        layers += [Flatten(), Dense(length * channels, 1, rng)]
        return Network(Sequential(layers), n_features)
    if member == "Dense":
        layers, width = [], n_features
        for _ in range(shape.dense_blocks):
            inner = Sequential([Dense(width, shape.dense_width, rng), Activation(shape.dense_activation)])
            layers.append(Concat(inner, width))
            width += shape.dense_width
        layers.append(Dense(width, 1, rng))
        return Network(Sequential(layers), n_features)
    if member == "AE":
        k = shape.ae_bottleneck
        encoder = Sequential([Dense(n_features, k, rng), Activation(shape.ae_activation)])
        decoder = Sequential([Dense(k, n_features, rng)])
        head = Sequential([Dense(k, 1, rng)])
        return AutoencoderNetwork(encoder, decoder, head, n_features, shape.ae_recon_weight)
    raise ValueError(f"unknown member {member!r}; expected one of {MEMBER_IDS}")


@dataclass
class MemberModel:
    """A trained network plus the target standardisation it was trained under."""

    member: str
    network: Network
    target_mean: float
    target_scale: float
    loss: str = "mse"
    history: list = field(default_factory=list, repr=False)
    best_epoch: int = 0

    def predict(self, x) -> np.ndarray:
        return self.network.predict(x) * self.target_scale + self.target_mean

    def to_bytes(self, metadata: dict | None = None) -> bytes:
        meta = {"member": self.member, "target_mean": self.target_mean,
                "target_scale": self.target_scale, "loss": self.loss, "best_epoch": self.best_epoch}
        meta.update(metadata or {})
        return network_to_bytes(self.network, meta)

    @classmethod
    def from_bytes(cls, data: bytes) -> "MemberModel":
        network, meta = network_from_bytes(data)
        return cls(meta["member"], network, meta["target_mean"], meta["target_scale"],
                   meta.get("loss", "mse"), best_epoch=meta.get("best_epoch", 0))


def fit_member(member: str, train, validation, config: TrainConfig, loss: LossKind = LossKind(),
               shape: MemberShape = MemberShape()) -> tuple[MemberModel, float]:
    """Train one member and return it with its validation MAE (original units).

    ``train`` and ``validation`` are ``(x, y)`` pairs. The target is
    standardised with training statistics before fitting.
    """
    x, y = (np.asarray(a, dtype=float) for a in train)
    xv, yv = (np.asarray(a, dtype=float) for a in validation)
    if len(yv) == 0:
        raise ValueError("validation set is empty")
    mean = float(y.mean())
    scale = float(y.std()) or 1.0
    network = build_member(member, x.shape[1], config.seed, shape)
    trained = fit(network, x, (y - mean) / scale, config, loss, validation=(xv, (yv - mean) / scale))
    model = MemberModel(member, trained.model, mean, scale, str(loss), trained.history, trained.best_epoch)
    error = float(np.mean(np.abs(model.predict(xv) - yv)))
    if error == 0.0:
        log.warning("member %s has zero validation error; check for train/validation leakage", member)
    return model, error


class ElasticNetConfigError(ValueError):
    pass


@dataclass
class ElasticNetParams:
    weights: np.ndarray
    intercept: float
    alpha: float
    lam: float
    n_iter: int = 0

    def predict(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.weights + self.intercept

    def to_bytes(self, metadata: dict | None = None) -> bytes:
        manifest = {"kind": "elasticnet", "alpha": self.alpha, "lambda": self.lam}
        return dumps(manifest, [self.weights, np.array([self.intercept])], metadata)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ElasticNetParams":
        manifest, (w, b), _ = loads(data)
        if manifest.get("kind") != "elasticnet":
            raise ValueError("file does not hold elastic-net parameters")
        return cls(w, float(b[0]), manifest["alpha"], manifest["lambda"])


def _soft_threshold(z: float, gamma: float) -> float:
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


def fit_elasticnet(x, y, alpha: float = 0.5, lam: float = 1.0, tol: float = 1e-10,
                   max_iter: int = 100_000) -> ElasticNetParams:
    """Cyclic coordinate descent on

        (1 / 2n) ||y - X w - b||^2 + lam * (alpha ||w||_1 + (1 - alpha) / 2 ||w||^2)

    The intercept is unpenalised and handled by centring. Stops when the
    largest coordinate update falls below ``tol``.
    """
    if lam < 0:
        raise ElasticNetConfigError("penalty lambda must be >= 0")
    if not 0.0 <= alpha <= 1.0:
        raise ElasticNetConfigError("l1 mix alpha must lie in [0, 1]")
    if tol <= 0:
        raise ElasticNetConfigError("tol must be > 0")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = x.shape
    x_mean = x.mean(axis=0)
    y_mean = y.mean()
    xc = x - x_mean
    yc = y - y_mean
    col_sq = (xc * xc).sum(axis=0) / n
    l1 = lam * alpha
    l2 = lam * (1.0 - alpha)

    w = np.zeros(p)
    resid = yc.copy()
    it = 0
    for it in range(1, max_iter + 1):
        biggest = 0.0
        for j in range(p):
            if col_sq[j] == 0:
                continue
            old = w[j]
            rho = xc[:, j] @ resid / n + col_sq[j] * old
            new = _soft_threshold(rho, l1) / (col_sq[j] + l2)
            if new != old:
                resid -= xc[:, j] * (new - old)
                w[j] = new
                biggest = max(biggest, abs(new - old))
        if biggest < tol:
            break
    return ElasticNetParams(w, float(y_mean - x_mean @ w), alpha, lam, it)
