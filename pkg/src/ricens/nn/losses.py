"""Regression losses returning (value, d value / d prediction)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LossKind:
    name: str = "mse"
    delta: float = 1.0

    def __post_init__(self):
        if self.name not in ("mse", "mae", "huber"):
            raise ValueError(f"unknown loss {self.name!r}")
        if self.delta <= 0:
            raise ValueError("huber delta must be > 0")

    @classmethod
    def parse(cls, text: str) -> "LossKind":
        """``mse``, ``mae``, ``huber`` or ``huber:<delta>``."""
        name, _, delta = text.partition(":")
        return cls(name.strip(), float(delta) if delta else 1.0)

    def __str__(self):
        return f"huber:{self.delta:g}" if self.name == "huber" else self.name

    def kink_distance(self, residual: np.ndarray) -> np.ndarray:
        """Distance of each residual from a point where the loss has no derivative."""
        if self.name == "mae":
            return np.abs(residual)
        return np.full_like(residual, np.inf, dtype=float)

    def __call__(self, pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
        r = pred - target
        n = r.size
        if self.name == "mse":
            return float(np.mean(r * r)), 2.0 * r / n
        if self.name == "mae":
            return float(np.mean(np.abs(r))), np.sign(r) / n
        small = np.abs(r) <= self.delta
        value = np.where(small, 0.5 * r * r, self.delta * (np.abs(r) - 0.5 * self.delta))
        grad = np.where(small, r, self.delta * np.sign(r))
        return float(np.mean(value)), grad / n


MSE = LossKind("mse")
MAE = LossKind("mae")
HUBER = LossKind("huber", 1.0)
