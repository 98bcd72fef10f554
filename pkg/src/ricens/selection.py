"""Scaling, splitting and the staged reduction of the engineered table."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from .features import CATEGORICAL_COLUMNS

PAPER_SELECTED_FEATURES = (
    "Season_Enc",
    "Dist_ChauPhu",
    "Dist_ChauThanh",
    "Dist_ThoaiSon",
    "Yield_kg",
    "Rainfall_growth_max",
    "Rainfall_growth_sum",
    "Rainfall_maturity_max",
    "VV_mean",
    "B08_max",
    "RGVI_mean",
    "kNDVI_mean",
    "GCC_mean",
    "LST_mean",
    "MET_solrad_mean",
)

# Columns derived from the target itself; kept when selected but flagged.
TARGET_ADJACENT = ("Yield_kg",)


class SelectionConfigError(ValueError):
    pass


def paper_selected_features() -> list[str]:
    """The fixed 15-feature set (11 numerical, 4 categorical)."""
    return list(PAPER_SELECTED_FEATURES)


@dataclass
class ScalerParams:
    minimum: pd.Series
    maximum: pd.Series

    def transform(self, frame: pd.DataFrame) -> pd.DataFrame:
        cols = list(self.minimum.index)
        span = self.maximum - self.minimum
        safe = span.where(span > 0, 1.0)
        scaled = (frame[cols] - self.minimum) / safe
        # constant columns collapse to 0 everywhere, including unseen rows
        scaled.loc[:, span[span <= 0].index] = 0.0
        return scaled

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"min": self.minimum, "max": self.maximum})


def minmax_fit_transform(frame: pd.DataFrame, fit_rows=None) -> tuple[pd.DataFrame, ScalerParams]:
    """Fit min/max on ``fit_rows`` only and map every row with it (no clipping)."""
    fit = frame if fit_rows is None else frame.iloc[np.asarray(fit_rows)]
    if len(fit) == 0:
        raise ValueError("cannot fit a scaler on zero rows")
    params = ScalerParams(fit.min(), fit.max())
    return params.transform(frame), params


def train_test_split(n_rows: int, test_fraction: float = 0.25, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle split; the test side has ``round(n * test_fraction)`` rows."""
    if n_rows < 4:
        raise ValueError("need at least 4 rows to split")
    order = np.random.default_rng(seed).permutation(n_rows)
    n_test = int(round(n_rows * test_fraction))
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def contingency_table(a, b) -> np.ndarray:
    table = pd.crosstab(pd.Series(np.asarray(a)), pd.Series(np.asarray(b))).to_numpy(dtype=float)
    # drop levels that never occur (all-zero marginals)
    return table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]


def chi2_statistic(table) -> tuple[float, float, int]:
    """Pearson chi-square on a contingency table, without continuity correction."""
    table = np.asarray(table, dtype=float)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    r, c = table.shape
    if r < 2 or c < 2:
        raise ValueError("chi-square test needs at least two levels per variable")
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / table.sum()
    statistic = float(((table - expected) ** 2 / expected).sum())
    dof = (r - 1) * (c - 1)
    return statistic, float(stats.chi2.sf(statistic, dof)), dof


def chi2_independence(a, b) -> tuple[float, float]:
    statistic, p_value, _ = chi2_statistic(contingency_table(a, b))
    return statistic, p_value


def cramers_v(table) -> float:
    table = np.asarray(table, dtype=float)
    statistic, _, _ = chi2_statistic(table)
    k = min(table.shape) - 1
    return float(np.sqrt(statistic / (table.sum() * k)))


def correlation_pvalue(x, y) -> tuple[float, float]:
    """Pearson r and the two-sided t-test p-value with n - 2 dof."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc @ xc) * (yc @ yc))
    if denom == 0:
        return 0.0, 1.0
    r = float(np.clip((xc @ yc) / denom, -1.0, 1.0))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * np.sqrt((n - 2) / (1 - r * r))
    return r, float(2 * stats.t.sf(abs(t), n - 2))


@dataclass
class SelectionConfig:
    iqr_factor: float = 1.5
    min_variance: float = 1e-4
    max_pvalue: float = 0.05
    max_abs_correlation: float = 0.9
    chi2_alpha: float = 0.05
    max_cramers_v: float = 0.9

    def __post_init__(self):
        if self.iqr_factor <= 0 or self.min_variance < 0:
            raise SelectionConfigError("iqr_factor must be > 0 and min_variance >= 0")
        if not (0 < self.max_pvalue <= 1 and 0 < self.chi2_alpha <= 1):
            raise SelectionConfigError("p-value thresholds must lie in (0, 1]")
        if not (0 < self.max_abs_correlation <= 1 and 0 < self.max_cramers_v <= 1):
            raise SelectionConfigError("association thresholds must lie in (0, 1]")


@dataclass
class SelectionReport:
    input_columns: list[str]
    surviving: list[str]
    dropped: dict[str, tuple[str, str]] = field(default_factory=dict)  # column -> (stage, reason)
    outlier_rows: list[int] = field(default_factory=list)
    target_correlation: dict[str, float] = field(default_factory=dict)
    target_pvalue: dict[str, float] = field(default_factory=dict)
    chi2_pairs: list[tuple[str, str, float, float, float]] = field(default_factory=list)
    flags: dict[str, str] = field(default_factory=dict)

    def stage_drops(self, stage: str) -> list[str]:
        return [c for c, (s, _) in self.dropped.items() if s == stage]

    def to_frame(self) -> pd.DataFrame:
        """One row per input column: status, stage, reason and target association."""
        rows = []
        for col in self.input_columns:
            stage, reason = self.dropped.get(col, ("", ""))
            rows.append({
                "column": col,
                "status": "kept" if col in self.surviving else "dropped",
                "stage": stage,
                "reason": reason,
                "target_r": self.target_correlation.get(col, np.nan),
                "target_p": self.target_pvalue.get(col, np.nan),
                "flag": self.flags.get(col, ""),
            })
        return pd.DataFrame(rows)

    def to_text(self) -> str:
        lines = [
            f"input columns: {len(self.input_columns)}",
            f"outlier rows removed: {len(self.outlier_rows)}",
        ]
        for stage in ("variance", "significance", "correlation", "chi2"):
            dropped = self.stage_drops(stage)
            lines.append(f"{stage}: dropped {len(dropped)}")
            lines.extend(f"  - {c}: {self.dropped[c][1]}" for c in dropped)
        lines.append(f"surviving ({len(self.surviving)}): {', '.join(self.surviving)}")
        lines.extend(f"flag {c}: {msg}" for c, msg in self.flags.items())
        return "\n".join(lines) + "\n"


def iqr_outlier_rows(target, factor: float = 1.5) -> np.ndarray:
    y = np.asarray(target, dtype=float)
    q1, q3 = np.percentile(y, [25, 75])
    spread = factor * (q3 - q1)
    return np.flatnonzero((y < q1 - spread) | (y > q3 + spread))


def selection_pipeline(frame: pd.DataFrame, target, config: SelectionConfig | None = None,
                       categorical=CATEGORICAL_COLUMNS) -> SelectionReport:
    """Run the five filter stages on an already-scaled table.

    Stages, in order: IQR outlier rows on the target, low variance, target
    significance (Pearson t-test), pairwise |r| redundancy keeping the member
    more associated with the target, and chi-square redundancy among the
    categorical columns.
    """
    config = config or SelectionConfig()
    frame = frame.reset_index(drop=True)
    y = pd.Series(np.asarray(target, dtype=float))
    report = SelectionReport(input_columns=list(frame.columns), surviving=[])
    for col in TARGET_ADJACENT:
        if col in frame.columns:
            report.flags[col] = "target-adjacent: derived from the same harvest measurement as the target"

    outliers = iqr_outlier_rows(y, config.iqr_factor)
    report.outlier_rows = [int(i) for i in outliers]
    keep_rows = np.setdiff1d(np.arange(len(y)), outliers)
    frame = frame.iloc[keep_rows]
    y = y.iloc[keep_rows].to_numpy()

    values = {c: frame[c].to_numpy(dtype=float) for c in frame.columns}
    variances = {c: float(np.var(v)) for c, v in values.items()}
    # any non-constant column can act as a redundancy partner, independent of
    # the other thresholds, so loosening one threshold never removes a survivor
    usable = [c for c in frame.columns if np.isfinite(variances[c]) and variances[c] > 0]
    for col in usable:
        r, p = correlation_pvalue(values[col], y)
        report.target_correlation[col] = r
        report.target_pvalue[col] = p
    order = {c: i for i, c in enumerate(frame.columns)}

    def outranks(k: str, c: str) -> bool:
        rk, rc = abs(report.target_correlation[k]), abs(report.target_correlation[c])
        return rk > rc or (rk == rc and order[k] < order[c])

    for col in frame.columns:
        if variances[col] < config.min_variance or not np.isfinite(variances[col]):
            report.dropped[col] = ("variance", f"variance {variances[col]:.3g} < {config.min_variance:g}")
    for col in usable:
        p = report.target_pvalue[col]
        if col not in report.dropped and p >= config.max_pvalue:
            report.dropped[col] = ("significance", f"target p-value {p:.3g} >= {config.max_pvalue:g}")

    corr = frame[usable].corr().abs() if usable else pd.DataFrame()
    for col in usable:
        if col in report.dropped:
            continue
        partners = [k for k in usable if k != col and outranks(k, col)
                    and corr.loc[col, k] > config.max_abs_correlation]
        if partners:
            k = max(partners, key=lambda k: corr.loc[col, k])
            report.dropped[col] = ("correlation", f"|r| = {corr.loc[col, k]:.3f} with {k}")

    cats = [c for c in usable if c in set(categorical)]
    for col in cats:
        for other in cats:
            if other == col or not outranks(other, col):
                continue
            table = contingency_table(values[col], values[other])
            if min(table.shape) < 2:
                continue
            statistic, p, _ = chi2_statistic(table)
            v = cramers_v(table)
            report.chi2_pairs.append((col, other, statistic, p, v))
            if col not in report.dropped and p < config.chi2_alpha and v > config.max_cramers_v:
                report.dropped[col] = ("chi2", f"dependent on {other} (Cramer's V {v:.3f}, p {p:.3g})")

    report.surviving = [c for c in frame.columns if c not in report.dropped]
    if not report.surviving:
        raise SelectionConfigError("every feature was dropped; loosen the selection thresholds")
    return report
