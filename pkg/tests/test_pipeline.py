import json

import numpy as np
import pandas as pd
import pytest

from ricens import dataio
from ricens.config import PipelineConfig
from ricens.evaluation import compute_metrics
from ricens.features import FeatureTable
from ricens.nn.io import loads
from ricens.pipeline import (
    ENSEMBLE,
    SUMMARY_COLUMNS,
    HeldOutSet,
    PipelineError,
    run_pipeline,
)
from ricens.regressors import MEMBER_IDS
from ricens.synthetic import SyntheticSpec

ARTIFACTS = [
    "features.csv", "split.csv", "preprocess.csv", "selection_report.txt", "selected_features.txt",
    "weights.txt", "validation_errors.csv", "cv_folds.csv", "metrics.txt", "metrics_summary.csv",
    "predictions.csv", "report.txt", "run_manifest.txt", "ground_truth.json",
    *(f"models/{m}.rcns" for m in (*MEMBER_IDS, "ElasticNet")),
    "figures/predicted_vs_actual.png", "figures/location_errors.png",
    "figures/ensemble_weights.png", "figures/model_comparison.png",
]


def test_artifacts_present(small_run):
    _, result = small_run
    for name in ARTIFACTS:
        assert (result.out_dir / name).is_file(), name
    assert not list(result.out_dir.parent.glob(".*partial"))


def test_artifacts_embed_hash_and_seed(small_run):
    config, result = small_run
    stamp = f"config_hash={config.digest} seed={config.seed}"
    for path in result.out_dir.rglob("*"):
        if path.suffix in (".csv", ".txt"):
            assert path.read_text(encoding="utf-8").splitlines()[0] == f"# {stamp}", path
        elif path.suffix == ".rcns":
            _, _, meta = loads(path.read_bytes())
            assert (meta["config_hash"], meta["seed"]) == (config.digest, config.seed)
        elif path.suffix == ".json":
            payload = json.loads(path.read_text())
            assert (payload["config_hash"], payload["seed"]) == (config.digest, config.seed)
        elif path.suffix == ".png":
            assert stamp.encode() in path.read_bytes()


def test_single_test_evaluation(small_run):
    _, result = small_run
    assert result.test_accesses == 1
    guard = HeldOutSet(FeatureTable(pd.DataFrame({"a": [1.0]}), pd.Series([1.0]),
                                    pd.DataFrame({"Yield_kg": [1.0]})))
    guard.reveal()
    with pytest.raises(PipelineError, match="more than once"):
        guard.reveal()


def test_cv_partitions_training_split(small_run):
    config, result = small_run
    split = dataio.read_frame(result.out_dir / "split.csv")
    n_train = int((split["role"] == "train").sum())
    assert n_train + int((split["role"] == "test").sum()) == 160
    assert int((split["role"] == "test").sum()) == 40
    folds = dataio.read_frame(result.out_dir / "cv_folds.csv")
    assert len(folds) == config.folds and folds["size"].sum() == n_train
    assert len(result.train.fold_rows) == 10


def test_summary_table(small_run):
    _, result = small_run
    summary = dataio.read_frame(result.out_dir / "metrics_summary.csv")
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert list(summary["Model"]) == [*MEMBER_IDS, "ElasticNet", ENSEMBLE]
    np.testing.assert_allclose(summary["R2 Diff."], summary["Train R2"] - summary["Test R2"], atol=1e-12)
    metrics = dict(line.split(" = ") for line in
                   (result.out_dir / "metrics.txt").read_text().splitlines() if not line.startswith("#"))
    row = summary.set_index("Model").loc[ENSEMBLE]
    assert float(metrics[f"{ENSEMBLE}.mae"]) == row["MAE"]
    assert int(metrics[f"{ENSEMBLE}.k"]) == 15


def test_predictions_file_matches_metrics(small_run):
    _, result = small_run
    pred = dataio.read_frame(result.out_dir / "predictions.csv")
    assert list(pred.columns[:6]) == ["row", "latitude", "longitude", "actual", "predicted", "error"]
    np.testing.assert_allclose(pred["error"], pred["predicted"] - pred["actual"], atol=1e-9)
    summary = result.summary.set_index("Model")
    m = compute_metrics(pred["predicted"].to_numpy(), pred["actual"].to_numpy(), 15)
    assert m.mae == pytest.approx(summary.loc[ENSEMBLE, "MAE"], rel=1e-12)


def test_ensemble_error_bound(small_run):
    _, result = small_run
    pred = dataio.read_frame(result.out_dir / "predictions.csv")
    weights = dict(zip(MEMBER_IDS, result.train.ensemble.weights))
    summary = result.summary.set_index("Model")
    blended_rmse = sum(weights[m] * summary.loc[m, "RMSE"] for m in MEMBER_IDS)
    blended_mae = sum(weights[m] * summary.loc[m, "MAE"] for m in MEMBER_IDS)
    assert summary.loc[ENSEMBLE, "RMSE"] <= blended_rmse + 1e-9
    assert blended_rmse <= max(summary.loc[m, "RMSE"] for m in MEMBER_IDS) + 1e-9
    assert summary.loc[ENSEMBLE, "MAE"] <= blended_mae + 1e-9
    assert len(pred) == 40


def test_rerun_is_byte_identical(small_run, tmp_path):
    config, result = small_run
    again = run_pipeline(config, tmp_path / "again", synthetic=SyntheticSpec(n_records=160, noise_sd=200.0))
    first = sorted(p.relative_to(result.out_dir) for p in result.out_dir.rglob("*") if p.is_file())
    second = sorted(p.relative_to(again.out_dir) for p in again.out_dir.rglob("*") if p.is_file())
    assert first == second
    for rel in first:
        assert (result.out_dir / rel).read_bytes() == (again.out_dir / rel).read_bytes(), rel


def test_too_many_folds_aborts_in_evaluation_and_cleans_up(tmp_path):
    config = PipelineConfig(folds=100, epochs=2)
    with pytest.raises(PipelineError) as info:
        run_pipeline(config, tmp_path / "out", synthetic=SyntheticSpec(n_records=40), report=False)
    assert info.value.stage == "evaluate" and info.value.exit_code == 7
    assert list(tmp_path.iterdir()) == []


def test_refuses_to_replace_foreign_directory(tmp_path):
    target = tmp_path / "mine"
    target.mkdir()
    (target / "notes.txt").write_text("keep me")
    with pytest.raises(PipelineError, match="not written by a previous run"):
        run_pipeline(PipelineConfig(epochs=1), target, synthetic=SyntheticSpec(n_records=40))
    assert (target / "notes.txt").read_text() == "keep me"


def test_run_pipeline_mode_writes_selection_audit(tmp_path):
    config = PipelineConfig(mode="run_pipeline", epochs=3, folds=3)
    result = run_pipeline(config, tmp_path / "sel", synthetic=SyntheticSpec(n_records=120), report=False)
    report = dataio.read_frame(result.out_dir / "selection_report.csv")
    assert len(report) == 95
    assert set(report.loc[report["status"] == "kept", "column"]) == set(result.selected)
    flagged = report.set_index("column").loc["Yield_kg", "flag"]
    assert "target-adjacent" in flagged
    assert (result.out_dir / "selection_report.txt").read_text().count("surviving (") == 1
