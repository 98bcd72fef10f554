"""Stage orchestration: extract -> select -> train -> evaluate -> report.

Every stage reads and writes artifacts under one output directory so each
can run on its own from the command line. ``run_pipeline`` chains them in a
scratch directory and only renames it into place when all stages succeed.
"""
from __future__ import annotations

import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import dataio
from .config import PipelineConfig
from .ensemble import combine_predictions, compute_weights, weights_from_text, weights_to_text
from .evaluation import CvReport, MetricError, MetricsReport, compute_metrics, kfold_indices, r2_gap, r2_score
from .features import CATEGORICAL_COLUMNS, TARGET_COLUMN, FeatureTable, assemble_feature_table
from .regressors import MEMBER_IDS, ElasticNetParams, MemberModel, fit_elasticnet, fit_member
from .selection import minmax_fit_transform, paper_selected_features, selection_pipeline, train_test_split
from .synthetic import SyntheticSpec, generate_synthetic_dataset

log = logging.getLogger(__name__)

ENSEMBLE = "RicEns-Net"
BASELINE = "ElasticNet"
STAGE_CODES = {"config": 2, "ingest": 3, "extract": 4, "select": 5, "train": 6,
               "evaluate": 7, "predict": 8, "report": 9}
RUN_MARKER = "run_manifest.txt"
SUMMARY_COLUMNS = ["Model", "MAE", "RMSE", "Train R2", "10-fold CV Avg. R2", "CV R2 std",
                   "Test R2", "R2 Diff.", "Test Adj. R2"]


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.exit_code = STAGE_CODES.get(stage, 1)


class HeldOutSet:
    """Wraps the test rows; ``reveal`` may be called exactly once."""

    def __init__(self, table: FeatureTable):
        self._table = table
        self.accesses = 0

    def __len__(self):
        return len(self._table)

    def reveal(self) -> FeatureTable:
        self.accesses += 1
        if self.accesses > 1:
            raise PipelineError("evaluate", "test split requested more than once")
        return self._table


# ---------------------------------------------------------------- helpers

def _stamp(config: PipelineConfig) -> str:
    return dataio.provenance_header(config.digest, config.seed)


def _write_text(path: Path, config: PipelineConfig, body: str):
    dataio.atomic_write(path, _stamp(config) + body)


def _read_text(path: Path) -> str:
    return "".join(line for line in Path(path).read_text(encoding="utf-8").splitlines(True)
                   if not line.startswith("#"))


def _member_seed(config: PipelineConfig, member: str, fold: int | None) -> int:
    return config.seed * 1000 + (0 if fold is None else fold + 1) * 10 + MEMBER_IDS.index(member)


@dataclass
class Preprocessor:
    """Training-split medians for imputation and min/max for scaling."""

    columns: list[str]
    median: pd.Series
    minimum: pd.Series
    maximum: pd.Series

    @classmethod
    def fit(cls, design: pd.DataFrame) -> "Preprocessor":
        median = design.median().fillna(0.0)
        filled = design.fillna(median)
        _, scaler = minmax_fit_transform(filled)
        return cls(list(design.columns), median, scaler.minimum, scaler.maximum)

    def transform(self, design: pd.DataFrame) -> pd.DataFrame:
        filled = design[self.columns].fillna(self.median)
        span = self.maximum - self.minimum
        out = (filled - self.minimum) / span.where(span > 0, 1.0)
        out.loc[:, span[span <= 0].index] = 0.0
        return out

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"column": self.columns, "median": self.median.to_numpy(),
                             "min": self.minimum.to_numpy(), "max": self.maximum.to_numpy()})

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "Preprocessor":
        idx = list(frame["column"])
        return cls(idx, pd.Series(frame["median"].to_numpy(), index=idx),
                   pd.Series(frame["min"].to_numpy(), index=idx), pd.Series(frame["max"].to_numpy(), index=idx))


def _inner_split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.random.default_rng(seed).permutation(n)
    n_val = max(1, int(round(n * fraction)))
    return np.sort(order[n_val:]), np.sort(order[:n_val])


@dataclass
class Ensemble:
    members: dict[str, MemberModel]
    errors: dict[str, float]
    weights: np.ndarray

    def member_predictions(self, x) -> dict[str, np.ndarray]:
        return {m: self.members[m].predict(x) for m in MEMBER_IDS}

    def predict(self, x) -> np.ndarray:
        preds = self.member_predictions(x)
        return combine_predictions([preds[m] for m in MEMBER_IDS], self.weights)


def fit_ensemble(x, y, config: PipelineConfig, fold: int | None = None) -> Ensemble:
    """Fit the four members on ``x``/``y`` and weight them by validation MAE.

    A seeded slice of the rows is held back for early stopping and for the
    validation errors that set the weights.
    """
    fit_rows, val_rows = _inner_split(len(y), config.validation_fraction, config.seed + (fold or 0) + 7)
    members, errors = {}, {}
    for member in MEMBER_IDS:
        train_cfg = config.train_config(member, seed=_member_seed(config, member, fold))
        model, error = fit_member(member, (x[fit_rows], y[fit_rows]), (x[val_rows], y[val_rows]),
                                  train_cfg, config.loss(member))
        members[member] = model
        errors[member] = error
    weights = compute_weights([errors[m] for m in MEMBER_IDS])
    return Ensemble(members, errors, weights)


# ----------------------------------------------------------------- stages

def stage_synth(config: PipelineConfig, data_dir: Path, spec: SyntheticSpec = SyntheticSpec()):
    """Generate a synthetic dataset and write it in the on-disk data format."""
    try:
        data = generate_synthetic_dataset(spec, config.seed)
        dataio.write_dataset(data_dir, data.records, data.bundles)
        _write_ground_truth(Path(data_dir) / "ground_truth.json", data.truth, spec, config)
    except (ValueError, OSError) as exc:
        raise PipelineError("ingest", str(exc)) from exc
    return data


def _write_ground_truth(path: Path, truth, spec: SyntheticSpec, config: PipelineConfig):
    payload = {"config_hash": config.digest, "seed": config.seed, "base": truth.base,
               "coefficients": truth.coefficients, "centre": truth.centre, "scale": truth.scale,
               "interaction": truth.interaction, "noise_sd": spec.noise_sd, "n_records": spec.n_records}
    dataio.atomic_write(path, json.dumps(payload, indent=1, sort_keys=True) + "\n")


def stage_extract(config: PipelineConfig, out_dir: Path, data_dir: Path | None = None,
                  records=None, bundles=None) -> FeatureTable:
    if records is None:
        try:
            records, bundles = dataio.read_dataset(data_dir)
        except (ValueError, OSError) as exc:
            raise PipelineError("ingest", str(exc)) from exc
    try:
        table = assemble_feature_table(records, bundles, config.max_cloud, config.window_days())
    except ValueError as exc:
        raise PipelineError("extract", str(exc)) from exc
    dataio.write_frame(Path(out_dir) / "features.csv", table.to_frame(), config.digest, config.seed)
    return table


def load_features(out_dir: Path) -> FeatureTable:
    return FeatureTable.from_frame(dataio.read_frame(Path(out_dir) / "features.csv"))


def stage_select(config: PipelineConfig, out_dir: Path, table: FeatureTable | None = None) -> list[str]:
    out_dir = Path(out_dir)
    try:
        table = table if table is not None else load_features(out_dir)
        train_idx, test_idx = train_test_split(len(table), config.test_fraction, config.seed)
    except (ValueError, OSError) as exc:
        raise PipelineError("select", str(exc)) from exc
    split = pd.DataFrame({"row": np.arange(len(table)), "role": "train"})
    split.loc[test_idx, "role"] = "test"
    dataio.write_frame(out_dir / "split.csv", split, config.digest, config.seed)

    train = table.take(train_idx)
    design = train.design()
    prep = Preprocessor.fit(design)
    dataio.write_frame(out_dir / "preprocess.csv", prep.to_frame(), config.digest, config.seed)

    if config.mode == "paper_fixed":
        selected = paper_selected_features()
        missing = [c for c in selected if c not in design.columns]
        if missing:
            raise PipelineError("select", f"feature table lacks paper-selected columns {missing}")
        body = "mode: paper_fixed\n" + "".join(f"{c}\n" for c in selected)
        _write_text(out_dir / "selection_report.txt", config, body)
    else:
        try:
            report = selection_pipeline(prep.transform(design), train.target, config.selection(),
                                        CATEGORICAL_COLUMNS)
        except ValueError as exc:
            raise PipelineError("select", str(exc)) from exc
        selected = report.surviving
        _write_text(out_dir / "selection_report.txt", config, "mode: run_pipeline\n" + report.to_text())
        dataio.write_frame(out_dir / "selection_report.csv", report.to_frame(), config.digest, config.seed)
    _write_text(out_dir / "selected_features.txt", config, "".join(f"{c}\n" for c in selected))
    return selected


def _load_selection(out_dir: Path):
    out_dir = Path(out_dir)
    selected = _read_text(out_dir / "selected_features.txt").split()
    prep = Preprocessor.from_frame(dataio.read_frame(out_dir / "preprocess.csv"))
    split = dataio.read_frame(out_dir / "split.csv")
    train_idx = split.loc[split["role"] == "train", "row"].to_numpy()
    test_idx = split.loc[split["role"] == "test", "row"].to_numpy()
    return selected, prep, train_idx, test_idx


def _matrix(table: FeatureTable, prep: Preprocessor, selected: list[str]) -> np.ndarray:
    return prep.transform(table.design())[selected].to_numpy(dtype=float)


@dataclass
class TrainResult:
    ensemble: Ensemble
    elasticnet: ElasticNetParams
    cv: dict[str, CvReport] = field(default_factory=dict)
    fold_rows: list = field(default_factory=list)


def stage_train(config: PipelineConfig, out_dir: Path, train: FeatureTable | None = None) -> TrainResult:
    """10-fold CV on the training split, then the final fit on all of it."""
    out_dir = Path(out_dir)
    selected, prep, train_idx, _ = _load_selection(out_dir)
    if train is None:
        train = load_features(out_dir).take(train_idx)
    x = _matrix(train, prep, selected)
    y = train.target.to_numpy(dtype=float)
    try:
        folds = kfold_indices(len(y), config.folds, config.seed)
    except ValueError as exc:
        raise PipelineError("evaluate", str(exc)) from exc

    scores: dict[str, list[float]] = {m: [] for m in (*MEMBER_IDS, ENSEMBLE, BASELINE)}
    fold_rows = []
    try:
        for i, held in enumerate(folds):
            rest = np.setdiff1d(np.arange(len(y)), held)
            ens = fit_ensemble(x[rest], y[rest], config, fold=i)
            preds = ens.member_predictions(x[held])
            preds[ENSEMBLE] = combine_predictions([preds[m] for m in MEMBER_IDS], ens.weights)
            preds[BASELINE] = fit_elasticnet(x[rest], y[rest], config.elasticnet_alpha,
                                             config.elasticnet_lambda).predict(x[held])
            for name, p in preds.items():
                scores[name].append(r2_score(p, y[held]))
            fold_rows.append({"fold": i, "size": len(held), **{n: scores[n][-1] for n in scores}})
            log.info("fold %d: ensemble r2 %.3f", i, scores[ENSEMBLE][-1])

        final = fit_ensemble(x, y, config)
        enet = fit_elasticnet(x, y, config.elasticnet_alpha, config.elasticnet_lambda)
    except (ValueError, RuntimeError) as exc:
        raise PipelineError("train", str(exc)) from exc

    meta = {"config_hash": config.digest, "seed": config.seed, "features": selected}
    for member, model in final.members.items():
        dataio.atomic_write(out_dir / "models" / f"{member}.rcns", model.to_bytes(meta))
    dataio.atomic_write(out_dir / "models" / "ElasticNet.rcns", enet.to_bytes(meta))
    _write_text(out_dir / "weights.txt", config, weights_to_text(MEMBER_IDS, final.weights))
    errors = pd.DataFrame({"member": list(MEMBER_IDS), "validation_mae": [final.errors[m] for m in MEMBER_IDS],
                           "weight": final.weights})
    dataio.write_frame(out_dir / "validation_errors.csv", errors, config.digest, config.seed)
    dataio.write_frame(out_dir / "cv_folds.csv", pd.DataFrame(fold_rows), config.digest, config.seed)
    cv = {name: CvReport(tuple(s)) for name, s in scores.items()}
    return TrainResult(final, enet, cv, fold_rows)


def load_models(out_dir: Path) -> tuple[Ensemble, ElasticNetParams]:
    out_dir = Path(out_dir)
    names, weights = weights_from_text(_read_text(out_dir / "weights.txt"))
    if names != list(MEMBER_IDS):
        raise PipelineError("evaluate", f"weights file lists members {names}")
    members = {m: MemberModel.from_bytes((out_dir / "models" / f"{m}.rcns").read_bytes()) for m in MEMBER_IDS}
    errors = dataio.read_frame(out_dir / "validation_errors.csv")
    enet = ElasticNetParams.from_bytes((out_dir / "models" / "ElasticNet.rcns").read_bytes())
    return Ensemble(members, dict(zip(errors["member"], errors["validation_mae"])), weights), enet


def _test_metrics(pred, actual, k: int) -> MetricsReport:
    try:
        return compute_metrics(pred, actual, k)
    except MetricError:
        if len(actual) - k - 1 > 0:
            raise
    m = compute_metrics(pred, actual, 0)
    return MetricsReport(m.mae, m.rmse, m.r2, float("nan"), m.n, k)


def stage_evaluate(config: PipelineConfig, out_dir: Path, held_out: HeldOutSet | None = None,
                   train: FeatureTable | None = None) -> pd.DataFrame:
    """The single test evaluation: metrics per model plus per-location predictions."""
    out_dir = Path(out_dir)
    selected, prep, train_idx, test_idx = _load_selection(out_dir)
    ens, enet = load_models(out_dir)
    if held_out is None or train is None:
        table = load_features(out_dir)
        train = table.take(train_idx) if train is None else train
        held_out = held_out or HeldOutSet(table.take(test_idx))
    cv = dataio.read_frame(out_dir / "cv_folds.csv")

    x_train = _matrix(train, prep, selected)
    y_train = train.target.to_numpy(dtype=float)
    test = held_out.reveal()
    x_test = _matrix(test, prep, selected)
    y_test = test.target.to_numpy(dtype=float)
    k = len(selected)

    def predictors():
        yield from ((m, ens.members[m].predict) for m in MEMBER_IDS)
        yield BASELINE, enet.predict
        yield ENSEMBLE, ens.predict

    if len(y_test) - k - 1 <= 0:
        log.warning("test split of %d rows is too small for adjusted r2 with %d features", len(y_test), k)
    rows, kv = [], []
    test_preds = {}
    try:
        for name, predict in predictors():
            train_r2 = r2_score(predict(x_train), y_train)
            p = predict(x_test)
            test_preds[name] = p
            m = _test_metrics(p, y_test, k)
            fold_scores = cv[name].to_numpy(dtype=float)
            rows.append({
                "Model": name, "MAE": m.mae, "RMSE": m.rmse, "Train R2": train_r2,
                "10-fold CV Avg. R2": float(fold_scores.mean()), "CV R2 std": float(fold_scores.std()),
                "Test R2": m.r2, "R2 Diff.": r2_gap(train_r2, m.r2), "Test Adj. R2": m.adjusted_r2,
            })
            kv += [f"{name}.{key} = {value!r}" for key, value in m.as_dict().items()]
            kv.append(f"{name}.train_r2 = {train_r2!r}")
    except ValueError as exc:
        raise PipelineError("evaluate", str(exc)) from exc
    kv += [f"weight.{m} = {w!r}" for m, w in zip(MEMBER_IDS, ens.weights)]
    kv += [f"validation_mae.{m} = {ens.errors[m]!r}" for m in MEMBER_IDS]

    summary = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    dataio.write_frame(out_dir / "metrics_summary.csv", summary, config.digest, config.seed)
    _write_text(out_dir / "metrics.txt", config, "\n".join(kv) + "\n")

    ensemble_pred = test_preds[ENSEMBLE]
    predictions = pd.DataFrame({
        "row": test_idx, "latitude": test.meta["Latitude"], "longitude": test.meta["Longitude"],
        "actual": y_test, "predicted": ensemble_pred, "error": ensemble_pred - y_test,
        **{f"pred_{m}": test_preds[m] for m in MEMBER_IDS},
    })
    dataio.write_frame(out_dir / "predictions.csv", predictions, config.digest, config.seed)
    return summary


def stage_predict(config: PipelineConfig, out_dir: Path, features_path: Path, output: Path) -> pd.DataFrame:
    """Apply the trained ensemble to another engineered feature file."""
    out_dir = Path(out_dir)
    try:
        selected, prep, _, _ = _load_selection(out_dir)
        ens, _ = load_models(out_dir)
        table = FeatureTable.from_frame(dataio.read_frame(features_path))
        pred = ens.predict(_matrix(table, prep, selected))
    except (ValueError, OSError, KeyError) as exc:
        raise PipelineError("predict", str(exc)) from exc
    frame = pd.DataFrame({"latitude": table.meta["Latitude"], "longitude": table.meta["Longitude"],
                          "actual": table.target, "predicted": pred, "error": pred - table.target})
    dataio.write_frame(output, frame, config.digest, config.seed)
    return frame


def stage_report(config: PipelineConfig, out_dir: Path) -> list[Path]:
    from .report import render_report

    try:
        return render_report(Path(out_dir), config)
    except (ValueError, OSError, KeyError) as exc:
        raise PipelineError("report", str(exc)) from exc


# -------------------------------------------------------------- full run

@dataclass
class RunResult:
    out_dir: Path
    summary: pd.DataFrame
    train: TrainResult
    test_accesses: int
    selected: list[str]


def run_pipeline(config: PipelineConfig, out_dir: Path, data_dir: Path | None = None,
                 synthetic: SyntheticSpec | None = None, report: bool = True) -> RunResult:
    """Run every stage into ``out_dir``; on failure nothing is left behind.

    Data comes from ``data_dir`` when given, otherwise from an in-memory
    synthetic dataset built from ``synthetic`` (default spec if None).
    """
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not (out_dir / RUN_MARKER).exists():
        raise PipelineError("config", f"{out_dir} exists and was not written by a previous run")
    scratch = out_dir.with_name(f".{out_dir.name}.partial")
    shutil.rmtree(scratch, ignore_errors=True)
    scratch.mkdir(parents=True)
    try:
        if data_dir is None:
            spec = synthetic or SyntheticSpec()
            try:
                data = generate_synthetic_dataset(spec, config.seed)
            except ValueError as exc:
                raise PipelineError("ingest", str(exc)) from exc
            _write_ground_truth(scratch / "ground_truth.json", data.truth, spec, config)
            table = stage_extract(config, scratch, records=data.records, bundles=data.bundles)
        else:
            table = stage_extract(config, scratch, data_dir=data_dir)
        selected = stage_select(config, scratch, table)
        _, _, train_idx, test_idx = _load_selection(scratch)
        train = table.take(train_idx)
        held_out = HeldOutSet(table.take(test_idx))
        trained = stage_train(config, scratch, train)
        summary = stage_evaluate(config, scratch, held_out, train)
        if report:
            stage_report(config, scratch)
        _write_text(scratch / RUN_MARKER, config, config.to_text())
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    if out_dir.exists():
        shutil.rmtree(out_dir)
    scratch.rename(out_dir)
    return RunResult(out_dir, summary, trained, held_out.accesses, selected)
