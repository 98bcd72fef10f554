"""Figures rendered from the evaluation artifacts.

Uses the non-interactive Agg backend. PNG metadata is pinned so that the
same artifacts always produce byte-identical images.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import dataio  # noqa: E402
from .ensemble import weights_from_text  # noqa: E402

FIGURES = ("predicted_vs_actual.png", "location_errors.png", "ensemble_weights.png", "model_comparison.png")


def _save(fig, path: Path, config):
    fig.savefig(path, dpi=110, format="png",
                metadata={"Software": None, "Description": f"config_hash={config.digest} seed={config.seed}"})
    plt.close(fig)


def plot_predicted_vs_actual(predictions, path: Path, config):
    fig, ax = plt.subplots(figsize=(5.5, 5))
    actual = predictions["actual"].to_numpy()
    pred = predictions["predicted"].to_numpy()
    ax.scatter(actual, pred, s=12, alpha=0.7, color="tab:green", edgecolors="none")
    lo, hi = float(min(actual.min(), pred.min())), float(max(actual.max(), pred.max()))
    ax.plot([lo, hi], [lo, hi], color="black", lw=1, ls="--", label="y = x")
    ax.set_xlabel("actual yield (kg/ha)")
    ax.set_ylabel("ensemble prediction (kg/ha)")
    ax.set_title("Test split: predicted vs actual")
    ax.legend(loc="upper left")
    _save(fig, path, config)


def plot_location_errors(predictions, path: Path, config):
    fig, axes = plt.subplots(1, 2, figsize=(11, 4.8), sharey=True)
    lon, lat = predictions["longitude"], predictions["latitude"]
    sc = axes[0].scatter(lon, lat, c=predictions["predicted"], cmap="viridis", s=18)
    fig.colorbar(sc, ax=axes[0], label="predicted yield (kg/ha)")
    axes[0].set_title("Predicted yield per location")
    err = predictions["error"].to_numpy()
    bound = float(np.abs(err).max()) or 1.0
    sc = axes[1].scatter(lon, lat, c=err, cmap="RdBu_r", vmin=-bound, vmax=bound, s=18)
    fig.colorbar(sc, ax=axes[1], label="prediction - actual (kg/ha)")
    axes[1].set_title("Error per location")
    for ax in axes:
        ax.set_xlabel("longitude")
    axes[0].set_ylabel("latitude")
    fig.tight_layout()
    _save(fig, path, config)


def plot_weights(names, weights, errors, path: Path, config):
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(names, weights, color="tab:blue")
    for bar, e in zip(bars, errors):
        ax.annotate(f"MAE {e:.0f}", (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    ha="center", va="bottom", fontsize=8)
    ax.set_ylabel("ensemble weight")
    ax.set_title("Member weights from validation MAE")
    _save(fig, path, config)


def plot_model_comparison(summary, path: Path, config):
    fig, axes = plt.subplots(1, 2, figsize=(11, 4.2))
    models = summary["Model"].tolist()
    x = np.arange(len(models))
    axes[0].bar(x - 0.2, summary["MAE"], 0.4, label="MAE")
    axes[0].bar(x + 0.2, summary["RMSE"], 0.4, label="RMSE")
    axes[0].set_ylabel("kg/ha")
    axes[0].legend()
    axes[1].bar(x - 0.27, summary["Train R2"], 0.27, label="train")
    axes[1].bar(x, summary["10-fold CV Avg. R2"], 0.27, yerr=summary["CV R2 std"], label="10-fold CV")
    axes[1].bar(x + 0.27, summary["Test R2"], 0.27, label="test")
    axes[1].set_ylabel("R2")
    axes[1].set_ylim(min(0.0, float(summary["Test R2"].min())), 1.15)
    axes[1].legend(ncol=3, loc="upper center")
    for ax in axes:
        ax.set_xticks(x, models, rotation=20)
    fig.tight_layout()
    _save(fig, path, config)


def render_report(out_dir: Path, config) -> list[Path]:
    """Write the four figures plus ``report.txt`` into ``out_dir/figures``."""
    out_dir = Path(out_dir)
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    predictions = dataio.read_frame(out_dir / "predictions.csv")
    summary = dataio.read_frame(out_dir / "metrics_summary.csv")
    errors = dataio.read_frame(out_dir / "validation_errors.csv")
    text = (out_dir / "weights.txt").read_text(encoding="utf-8")
    names, weights = weights_from_text(text)

    paths = [fig_dir / name for name in FIGURES]
    plot_predicted_vs_actual(predictions, paths[0], config)
    plot_location_errors(predictions, paths[1], config)
    plot_weights(names, weights, errors["validation_mae"].to_numpy(), paths[2], config)
    plot_model_comparison(summary, paths[3], config)

    table = summary.to_string(index=False, float_format=lambda v: f"{v:.4f}")
    body = f"models evaluated on {len(predictions)} held-out locations\n\n{table}\n"
    dataio.atomic_write(out_dir / "report.txt", dataio.provenance_header(config.digest, config.seed) + body)
    return paths + [out_dir / "report.txt"]
