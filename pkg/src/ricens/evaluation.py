"""Regression metrics, k-fold cross-validation and train/test gap."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

log = logging.getLogger(__name__)


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    rmse: float
    r2: float
    adjusted_r2: float
    n: int
    k: int

    def as_dict(self) -> dict:
        return asdict(self)


def r2_score(y_pred, y_actual) -> float:
    y_pred = np.asarray(y_pred, dtype=float)
    y_actual = np.asarray(y_actual, dtype=float)
    total = np.sum((y_actual - y_actual.mean()) ** 2)
    if total == 0:
        log.warning("r2 undefined: actual values are all identical")
        return float("nan")
    return float(1.0 - np.sum((y_actual - y_pred) ** 2) / total)


def adjusted_r2(r2: float, n: int, k: int) -> float:
    if n - k - 1 <= 0:
        raise MetricError(f"adjusted r2 undefined for n={n}, k={k} (needs n - k - 1 > 0)")
    return 1.0 - (1.0 - r2) * (n - 1) / (n - k - 1)


def compute_metrics(y_pred, y_actual, k: int) -> MetricsReport:
    """MAE, RMSE, R^2 and adjusted R^2 for ``k`` predictors."""
    y_pred = np.asarray(y_pred, dtype=float)
    y_actual = np.asarray(y_actual, dtype=float)
    if y_pred.shape != y_actual.shape or y_pred.ndim != 1:
        raise MetricError("predictions and actuals must be equal-length vectors")
    n = y_actual.size
    if n < 2:
        raise MetricError("need at least two observations")
    resid = y_pred - y_actual
    r2 = r2_score(y_pred, y_actual)
    return MetricsReport(
        mae=float(np.mean(np.abs(resid))),
        rmse=float(np.sqrt(np.mean(resid ** 2))),
        r2=r2,
        adjusted_r2=adjusted_r2(r2, n, k),
        n=n,
        k=k,
    )


def r2_gap(train_r2: float, test_r2: float) -> float:
    return train_r2 - test_r2


def kfold_indices(n_rows: int, folds: int = 10, seed: int = 0) -> list[np.ndarray]:
    """Seeded shuffle cut into ``folds`` near-equal parts (larger parts first)."""
    if folds < 2:
        raise ValueError("need at least two folds")
    if folds > n_rows:
        raise ValueError(f"{folds} folds requested for only {n_rows} rows")
    order = np.random.default_rng(seed).permutation(n_rows)
    return [np.sort(part) for part in np.array_split(order, folds)]


@dataclass(frozen=True)
class CvReport:
    fold_r2: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_r2))

    @property
    def std(self) -> float:
        return float(np.std(self.fold_r2))

    def __str__(self):
        return f"{self.mean:.3f} +/- {self.std:.3f}"


def kfold_cross_validate(factory, x, y, folds: int = 10, seed: int = 0) -> CvReport:
    """Hold each fold out once and record the held-out R^2.

    ``factory(x_train, y_train, fold_index)`` must return a fitted object
    with ``predict``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scores = []
    parts = kfold_indices(len(y), folds, seed)
    for i, held in enumerate(parts):
        train = np.setdiff1d(np.arange(len(y)), held)
        model = factory(x[train], y[train], i)
        scores.append(r2_score(model.predict(x[held]), y[held]))
    return CvReport(tuple(scores))
