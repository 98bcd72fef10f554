"""Per-location feature extraction and the 94-column engineered table."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .acquisition import (
    DEFAULT_MAX_CLOUD,
    METEO_CHANNELS,
    AcquisitionTile,
    MeteoSeries,
    RainfallSeries,
    SarAcquisition,
    TimeWindow,
    center_crop_3x3,
    derive_windows,
    filter_acquisitions,
)
from .spectral import BAND_CODES, BandReflectances, IndexId, SarBackscatter, compute_optical_index, compute_rvi, compute_vv_vh_ratio

DISTRICTS = ("ChauPhu", "ChauThanh", "ThoaiSon")
SEASONS = ("WS", "SA")
FREQUENCIES = ("D", "T")

MSI_BANDS = ("B02", "B03", "B04", "B05", "B06", "B07", "B08", "B11", "B12")
BAND_STATS = ("min", "max", "mean", "var")
VEGETATION_INDICES = (
    IndexId.NDVI, IndexId.SR, IndexId.EVI, IndexId.EVI2, IndexId.SAVI, IndexId.RGVI,
    IndexId.DVI, IndexId.MSR, IndexId.NIRv, IndexId.kNDVI, IndexId.NDVIre,
    IndexId.NDRE1, IndexId.NDRE2,
)
WATER_SOIL_INDICES = (IndexId.NDWI, IndexId.BSI, IndexId.LSWI16)
BIOCHEMICAL_INDICES = (IndexId.CCI, IndexId.GCC)

SAR_COLUMNS = ["VV_mean", "VH_mean", "VV_VH_ratio_mean", "RVI_mean"]
CATEGORICAL_COLUMNS = ["Season_Enc", "Dist_ChauPhu", "Dist_ChauThanh", "Dist_ThoaiSon"]
TARGET_COLUMN = "Yield_rate"
# Field quantities carried next to the engineered table (not part of the 94).
FIELD_COLUMNS = ["Yield_kg", "Area", "Latitude", "Longitude"]


def _index_columns(indices) -> list[str]:
    return [f"{i.value}_{s}" for i in indices for s in ("mean", "var")]


FEATURE_SETS: dict[str, list[str]] = {
    "set1_sar": SAR_COLUMNS,
    "set2_bands": [f"{b}_{s}" for b in MSI_BANDS for s in BAND_STATS],
    "set3_vegetation": _index_columns(VEGETATION_INDICES),
    "set4_water_soil": _index_columns(WATER_SOIL_INDICES),
    "set5_biochemical": _index_columns(BIOCHEMICAL_INDICES),
    "set6_meteo": [f"{c}_{s}" for c in METEO_CHANNELS for s in ("mean", "var")],
    "set7_rainfall": [f"Rainfall_{w}_{s}" for w in ("growth", "maturity") for s in ("mean", "max", "sum")],
    "categorical": CATEGORICAL_COLUMNS,
}
FEATURE_COLUMNS: list[str] = [c for cols in FEATURE_SETS.values() for c in cols]
assert len(FEATURE_COLUMNS) == 94 and len(set(FEATURE_COLUMNS)) == 94


class IngestionError(ValueError):
    pass


@dataclass(frozen=True)
class FieldRecord:
    district: str
    latitude: float
    longitude: float
    season: str
    frequency: str
    harvest_date: dt.date
    area: float
    yield_kg: float
    yield_rate: float
    line: int | None = field(default=None, compare=False)

    def __post_init__(self):
        where = f" (line {self.line})" if self.line is not None else ""
        if self.district not in DISTRICTS:
            raise IngestionError(f"unknown district {self.district!r}{where}")
        if self.season not in SEASONS:
            raise IngestionError(f"unknown season {self.season!r}{where}")
        if self.frequency not in FREQUENCIES:
            raise IngestionError(f"unknown crop frequency {self.frequency!r}{where}")
        if not (np.isfinite(self.area) and self.area > 0):
            raise IngestionError(f"area must be positive{where}")
        for name in ("yield_kg", "yield_rate"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise IngestionError(f"{name} must be finite and >= 0{where}")

    @property
    def key(self) -> tuple:
        return (self.latitude, self.longitude, self.harvest_date)


@dataclass
class LocationBundle:
    """All raw acquisitions gathered for one field record."""

    tiles: list = field(default_factory=list)
    sar: list = field(default_factory=list)
    rainfall: RainfallSeries | None = None
    meteo: MeteoSeries | None = None


@dataclass
class FeatureTable:
    """Engineered features (NaN = missing), the target, and field metadata."""

    features: pd.DataFrame
    target: pd.Series
    meta: pd.DataFrame

    def __post_init__(self):
        if self.features.columns.duplicated().any():
            raise ValueError("feature column names must be unique")
        if not (len(self.features) == len(self.target) == len(self.meta)):
            raise ValueError("features, target and meta row counts differ")

    @property
    def columns(self) -> list[str]:
        return list(self.features.columns)

    @property
    def missing_mask(self) -> np.ndarray:
        return self.features.isna().to_numpy()

    def __len__(self):
        return len(self.features)

    def design(self) -> pd.DataFrame:
        """Features plus the field-level Yield_kg column available to selection."""
        return pd.concat([self.features, self.meta[["Yield_kg"]]], axis=1)

    def take(self, rows) -> "FeatureTable":
        rows = np.asarray(rows)
        return FeatureTable(
            self.features.iloc[rows].reset_index(drop=True),
            self.target.iloc[rows].reset_index(drop=True),
            self.meta.iloc[rows].reset_index(drop=True),
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.concat([self.meta, self.features, self.target.rename(TARGET_COLUMN)], axis=1)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "FeatureTable":
        missing = [c for c in FIELD_COLUMNS + [TARGET_COLUMN] if c not in frame.columns]
        if missing:
            raise ValueError(f"feature file lacks columns {missing}")
        feature_cols = [c for c in frame.columns if c not in FIELD_COLUMNS and c != TARGET_COLUMN]
        return cls(
            frame[feature_cols].astype(float).reset_index(drop=True),
            frame[TARGET_COLUMN].astype(float).reset_index(drop=True),
            frame[FIELD_COLUMNS].astype(float).reset_index(drop=True),
        )


def _population_var(values: np.ndarray) -> float:
    # a constant pool is exactly 0, not the rounding residue of the mean
    if values.min() == values.max():
        return 0.0
    return float(values.var())


def _mean_var(values: np.ndarray) -> tuple[float, float]:
    values = values[np.isfinite(values)]
    if values.size == 0:
        return np.nan, np.nan
    return float(values.mean()), _population_var(values)


def sar_feature_set(acqs) -> dict[str, float]:
    """Pooled VV/VH means plus pixel-wise ratio and RVI means."""
    if not acqs:
        return dict.fromkeys(SAR_COLUMNS, np.nan)
    vv = np.concatenate([np.ravel(a.vv) for a in acqs])
    vh = np.concatenate([np.ravel(a.vh) for a in acqs])
    sar = SarBackscatter(vv, vh)
    return {
        "VV_mean": float(vv.mean()),
        "VH_mean": float(vh.mean()),
        "VV_VH_ratio_mean": float(np.mean(compute_vv_vh_ratio(sar))),
        "RVI_mean": float(np.mean(compute_rvi(sar))),
    }


def band_statistics(tiles, band: str) -> dict[str, float]:
    """Min, max, mean and population variance of one band over all pooled pixels."""
    if not tiles:
        return dict.fromkeys(BAND_STATS, np.nan)
    pool = np.concatenate([np.ravel(t.bands[band]) for t in tiles])
    return {
        "min": float(pool.min()),
        "max": float(pool.max()),
        "mean": float(pool.mean()),
        "var": _population_var(pool),
    }


def _pooled_bands(tiles) -> BandReflectances:
    return BandReflectances.from_codes(
        {code: np.concatenate([np.ravel(t.bands[code]) for t in tiles]) for code in BAND_CODES.values()}
    )


def index_statistics(tiles, index: IndexId | str) -> dict[str, float]:
    """Mean and variance of per-pixel index values; undefined pixels are skipped."""
    if not tiles:
        return {"mean": np.nan, "var": np.nan}
    values = np.atleast_1d(compute_optical_index(index, _pooled_bands(tiles)))
    mean, var = _mean_var(values)
    return {"mean": mean, "var": var}


def _rain_stats(rate: np.ndarray) -> tuple[float, float, float]:
    if rate.size == 0:
        return np.nan, np.nan, np.nan
    return float(rate.mean()), float(rate.max()), float(rate.sum())


def rainfall_features(series: RainfallSeries | None, growth: TimeWindow, maturity: TimeWindow) -> dict[str, float]:
    out = {}
    for name, window in (("growth", growth), ("maturity", maturity)):
        rate = series.rate[window.mask(series.timestamps)] if series is not None else np.empty(0)
        mean, peak, total = _rain_stats(rate)
        out[f"Rainfall_{name}_mean"] = mean
        out[f"Rainfall_{name}_max"] = peak
        out[f"Rainfall_{name}_sum"] = total
    return out


def meteo_features(series: MeteoSeries | None, window: TimeWindow) -> dict[str, float]:
    out = {}
    channels = series.channels() if series is not None else {c: None for c in METEO_CHANNELS}
    inside = window.mask(series.timestamps) if series is not None else None
    for name, values in channels.items():
        if values is None:
            mean, var = np.nan, np.nan
        else:
            mean, var = _mean_var(values[inside])
        out[f"{name}_mean"] = mean
        out[f"{name}_var"] = var
    return out


def encode_categoricals(record: FieldRecord) -> dict[str, float]:
    """Season as 0 (WS) / 1 (SA) and a one-hot district triplet."""
    out = {"Season_Enc": float(record.season == "SA")}
    for district in DISTRICTS:
        out[f"Dist_{district}"] = float(record.district == district)
    return out


def extract_location(record: FieldRecord, bundle: LocationBundle, max_cloud: float = DEFAULT_MAX_CLOUD,
                     windows: dict | None = None) -> dict[str, float]:
    """One row of the engineered table for a single field record.

    Grids larger than 3x3 are centre-cropped first. SAR and meteorology use
    the growth window, optical tiles the cloud-filtered Sentinel-2 window.
    """
    windows = windows or derive_windows(record.harvest_date)
    growth = windows["growth"]
    row: dict[str, float] = {}

    sar = [_crop_sar(a) for a in bundle.sar if growth.contains(a.timestamp)]
    row.update(sar_feature_set(sar))

    tiles = [_crop_tile(t) for t in filter_acquisitions(bundle.tiles, max_cloud, windows["s2"])]
    for band in MSI_BANDS:
        for stat, value in band_statistics(tiles, band).items():
            row[f"{band}_{stat}"] = value
    for index in VEGETATION_INDICES + WATER_SOIL_INDICES + BIOCHEMICAL_INDICES:
        for stat, value in index_statistics(tiles, index).items():
            row[f"{index.value}_{stat}"] = value

    row.update(meteo_features(bundle.meteo, growth))
    row.update(rainfall_features(bundle.rainfall, growth, windows["maturity"]))
    row.update(encode_categoricals(record))
    return row


def _crop_sar(acq: SarAcquisition) -> SarAcquisition:
    if acq.vv.shape == (3, 3) and acq.vh.shape == (3, 3):
        return acq
    return SarAcquisition(acq.timestamp, center_crop_3x3(acq.vv), center_crop_3x3(acq.vh))


def _crop_tile(tile: AcquisitionTile) -> AcquisitionTile:
    if all(g.shape == (3, 3) for g in tile.bands.values()):
        return tile
    return AcquisitionTile(tile.timestamp, tile.cloud_fraction,
                           {name: center_crop_3x3(g) for name, g in tile.bands.items()})


def assemble_feature_table(records, bundles, max_cloud: float = DEFAULT_MAX_CLOUD,
                           window_days: dict | None = None) -> FeatureTable:
    """Build the 94-column table, one row per record, in record order.

    ``bundles`` is a sequence aligned with ``records`` (or a mapping keyed by
    record key). Records without acquisitions still get a row, with their
    satellite columns left as NaN.
    """
    keys = [r.key for r in records]
    if len(set(keys)) != len(keys):
        raise IngestionError("duplicate (latitude, longitude, harvest_date) location keys")
    if isinstance(bundles, dict):
        bundles = [bundles.get(k, LocationBundle()) for k in keys]
    if len(bundles) != len(records):
        raise IngestionError("need exactly one acquisition bundle per record")

    window_days = window_days or {}
    rows = [extract_location(r, b, max_cloud, derive_windows(r.harvest_date, **window_days))
            for r, b in zip(records, bundles)]
    features = pd.DataFrame(rows, columns=FEATURE_COLUMNS, dtype=float)
    target = pd.Series([r.yield_rate for r in records], name=TARGET_COLUMN, dtype=float)
    meta = pd.DataFrame(
        {
            "Yield_kg": [r.yield_kg for r in records],
            "Area": [r.area for r in records],
            "Latitude": [r.latitude for r in records],
            "Longitude": [r.longitude for r in records],
        },
        dtype=float,
    )
    return FeatureTable(features, target, meta)
