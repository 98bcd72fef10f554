"""Inverse-validation-error weighting of ensemble members."""
from __future__ import annotations

import numpy as np


class EnsembleDomainError(ValueError):
    pass


def compute_weights(errors) -> np.ndarray:
    """w_i = (1 / e_i) / sum_j (1 / e_j); every e_i must be finite and > 0."""
    e = np.asarray(errors, dtype=float)
    if e.ndim != 1 or e.size == 0:
        raise EnsembleDomainError("need a non-empty vector of validation errors")
    if not np.all(np.isfinite(e)) or np.any(e <= 0):
        raise EnsembleDomainError(f"validation errors must be finite and > 0, got {e.tolist()}")
    # dividing by the smallest error first keeps the inverses O(1)
    inv = e.min() / e
    return inv / inv.sum()


def combine_predictions(predictions, weights) -> np.ndarray:
    """Weighted average of member prediction vectors (one row per member)."""
    preds = [np.asarray(p, dtype=float) for p in predictions]
    w = np.asarray(weights, dtype=float)
    if len(preds) != w.size:
        raise ValueError(f"{len(preds)} prediction vectors but {w.size} weights")
    if len({p.shape for p in preds}) != 1:
        raise ValueError("member prediction vectors differ in length")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise EnsembleDomainError("weights must be nonnegative and sum to 1")
    return np.tensordot(w, np.stack(preds), axes=1)


def weights_to_text(members, weights) -> str:
    return "".join(f"{m}\t{w:.17g}\n" for m, w in zip(members, weights))


def weights_from_text(text: str) -> tuple[list[str], np.ndarray]:
    members, weights = [], []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        name, value = line.split("\t")
        members.append(name)
        weights.append(float(value))
    return members, np.array(weights)
