"""Synthetic fields and acquisitions with a known yield function.

The generator draws per-location latent conditions, renders raw sensor
observations from them, extracts the engineered features exactly as the
pipeline would, and sets ``yield_rate = f(features) + noise``. Because
``f`` acts on the extracted features, a noise-free dataset is reproduced
exactly by the extraction stage.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .acquisition import AcquisitionTile, MeteoSeries, RainfallSeries, SarAcquisition
from .features import DISTRICTS, FieldRecord, LocationBundle, assemble_feature_table
from .selection import PAPER_SELECTED_FEATURES

# Published record counts per district.
DISTRICT_COUNTS = {"ChauThanh": 218, "ThoaiSon": 171, "ChauPhu": 168}
DISTRICT_CENTRES = {"ChauThanh": (10.43, 105.27), "ThoaiSon": (10.30, 105.26), "ChauPhu": (10.56, 105.15)}

# Ground-truth effect of one standard deviation of each feature, in kg/ha.
DEFAULT_COEFFICIENTS = {
    "Season_Enc": -350.0,
    "Dist_ChauPhu": 120.0,
    "Dist_ChauThanh": -80.0,
    "Dist_ThoaiSon": 0.0,
    "Yield_kg": 0.0,
    "Rainfall_growth_max": 90.0,
    "Rainfall_growth_sum": 160.0,
    "Rainfall_maturity_max": -110.0,
    "VV_mean": 180.0,
    "B08_max": 140.0,
    "RGVI_mean": 150.0,
    "kNDVI_mean": 260.0,
    "GCC_mean": -120.0,
    "LST_mean": -170.0,
    "MET_solrad_mean": 200.0,
}
BASE_YIELD = 6500.0


@dataclass(frozen=True)
class SyntheticSpec:
    n_records: int = 557
    noise_sd: float = 300.0
    coefficients: dict = field(default_factory=lambda: dict(DEFAULT_COEFFICIENTS))
    interaction: float = 0.0
    optical_revisit_days: int = 5
    sar_revisit_days: int = 6
    rain_step_hours: int = 3
    cloud_beta: tuple[float, float] = (1.2, 4.0)

    def __post_init__(self):
        if self.n_records < 20:
            raise ValueError("synthetic datasets need at least 20 records")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        unknown = set(self.coefficients) - set(PAPER_SELECTED_FEATURES)
        if unknown:
            raise ValueError(f"coefficients for non-selected features: {sorted(unknown)}")
        if self.coefficients.get("Yield_kg", 0.0) != 0.0:
            raise ValueError("Yield_kg is computed from the target and cannot drive it")


@dataclass(frozen=True)
class GroundTruth:
    """Linear (plus optional VV x kNDVI interaction) function of the standardised features."""

    base: float
    coefficients: dict
    centre: dict
    scale: dict
    interaction: float = 0.0

    def __call__(self, frame: pd.DataFrame) -> np.ndarray:
        z = {c: (frame[c].to_numpy(dtype=float) - self.centre[c]) / self.scale[c] for c in self.coefficients}
        out = np.full(len(frame), self.base)
        for c, beta in self.coefficients.items():
            out = out + beta * z[c]
        if self.interaction:
            out = out + self.interaction * z["VV_mean"] * z["kNDVI_mean"]
        return out


@dataclass
class SyntheticDataset:
    records: list
    bundles: list
    truth: GroundTruth


def _allocate_districts(n: int, rng: np.random.Generator) -> list[str]:
    total = sum(DISTRICT_COUNTS.values())
    counts = {d: int(round(n * c / total)) for d, c in DISTRICT_COUNTS.items()}
    counts["ChauThanh"] += n - sum(counts.values())
    labels = [d for d, c in counts.items() for _ in range(c)]
    return list(rng.permutation(labels))


def _harvest_date(season: str, rng: np.random.Generator) -> dt.date:
    if season == "WS":
        start, span = dt.date(2022, 3, 18), 44
    else:
        start, span = dt.date(2022, 6, 20), 50
    return start + dt.timedelta(days=int(rng.integers(0, span + 1)))


def _sar_shape(rng):
    # some extracts come back larger than 3x3 and get cropped on extraction
    return [(3, 3), (3, 3), (3, 4), (4, 4), (5, 5)][int(rng.integers(0, 5))]


def _location_bundle(harvest: dt.date, latent: dict, spec: SyntheticSpec, rng: np.random.Generator) -> LocationBundle:
    first = harvest - dt.timedelta(days=100)
    vigor = latent["vigor"]
    bundle = LocationBundle()

    for day in range(0, 100, spec.optical_revisit_days):
        when = first + dt.timedelta(days=day)
        cloud = float(np.clip(rng.beta(*spec.cloud_beta), 0.0, 1.0))
        phase = np.sin(np.pi * day / 100.0)
        nir = 0.22 + 0.16 * vigor * phase + 0.03 * latent["canopy"]
        red = np.clip(0.09 - 0.04 * vigor * phase + 0.01 * latent["soil"], 0.01, None)
        base = {
            "B02": 0.05 + 0.01 * latent["soil"],
            "B03": 0.08 + 0.015 * latent["greenness"],
            "B04": red,
            "B05": 0.12 + 0.05 * vigor * phase,
            "B06": 0.18 + 0.09 * vigor * phase,
            "B07": 0.21 + 0.12 * vigor * phase,
            "B08": nir,
            "B11": 0.16 - 0.04 * latent["water"],
            "B12": 0.10 - 0.03 * latent["water"],
        }
        grids = {band: np.clip(level * (1 + 0.05 * rng.standard_normal((3, 3))), 0.002, 1.2)
                 for band, level in base.items()}
        bundle.tiles.append(AcquisitionTile(when, round(cloud, 4), grids))

    for day in range(0, 100, spec.sar_revisit_days):
        when = first + dt.timedelta(days=day)
        shape = _sar_shape(rng)
        vv = latent["vv_level"] * np.exp(0.2 * rng.standard_normal(shape))
        vh = latent["vh_level"] * np.exp(0.2 * rng.standard_normal(shape))
        bundle.sar.append(SarAcquisition(when, vv, vh))

    start = np.datetime64(first, "s")
    steps = 100 * 24 // spec.rain_step_hours
    stamps = start + np.arange(steps) * np.timedelta64(spec.rain_step_hours * 3600, "s")
    wet = rng.random(steps) < 0.25 * latent["rain_freq"]
    rate = np.where(wet, rng.gamma(1.5, latent["rain_scale"], steps), 0.0)
    bundle.rainfall = RainfallSeries(stamps, np.round(rate, 6))

    days = start + np.arange(100) * np.timedelta64(86400, "s")
    bundle.meteo = MeteoSeries(
        days,
        latent["air_t"] + 1.5 * rng.standard_normal(100),
        latent["lst"] + 2.5 * rng.standard_normal(100),
        latent["solrad"] + 25.0 * rng.standard_normal(100),
        np.clip(latent["sh"] + 0.001 * rng.standard_normal(100), 1e-4, None),
    )
    return bundle


def generate_synthetic_dataset(spec: SyntheticSpec = SyntheticSpec(), seed: int = 0) -> SyntheticDataset:
    """Records, per-record acquisition bundles and the ground-truth yield function."""
    rng = np.random.default_rng(seed)
    districts = _allocate_districts(spec.n_records, rng)
    drafts = []
    bundles = []
    for i, district in enumerate(districts):
        season = "WS" if rng.random() < 0.5 else "SA"
        harvest = _harvest_date(season, rng)
        lat0, lon0 = DISTRICT_CENTRES[district]
        # index-based offset keeps (lat, lon, harvest) keys unique
        lat = round(lat0 + rng.uniform(-0.06, 0.06) + i * 1e-6, 6)
        lon = round(lon0 + rng.uniform(-0.06, 0.06), 6)
        latent = {
            "vigor": rng.uniform(0.4, 1.0),
            "canopy": rng.standard_normal(),
            "soil": rng.standard_normal(),
            "greenness": rng.standard_normal(),
            "water": rng.uniform(-1, 1),
            "vv_level": rng.uniform(0.04, 0.16),
            "vh_level": rng.uniform(0.01, 0.04),
            "rain_freq": rng.uniform(0.3, 1.0) * (0.6 if season == "WS" else 1.0),
            "rain_scale": rng.uniform(0.5, 3.0),
            "air_t": rng.uniform(298.0, 304.0),
            "lst": rng.uniform(300.0, 310.0),
            "solrad": rng.uniform(170.0, 260.0),
            "sh": rng.uniform(0.015, 0.021),
        }
        bundles.append(_location_bundle(harvest, latent, spec, rng))
        drafts.append(dict(district=district, latitude=lat, longitude=lon, season=season,
                           frequency="T" if rng.random() < 0.4 else "D", harvest_date=harvest,
                           area=round(float(rng.uniform(1.0, 12.0)), 3)))

    placeholder = [FieldRecord(**d, yield_kg=0.0, yield_rate=0.0) for d in drafts]
    table = assemble_feature_table(placeholder, bundles)
    frame = table.features
    coefficients = {c: b for c, b in spec.coefficients.items() if b != 0.0}
    truth = GroundTruth(
        BASE_YIELD,
        coefficients,
        {c: float(frame[c].mean()) for c in coefficients},
        {c: float(frame[c].std(ddof=0)) or 1.0 for c in coefficients},
        spec.interaction,
    )
    clean = truth(frame)
    rates = np.clip(clean + spec.noise_sd * rng.standard_normal(len(clean)), 0.0, None)
    records = []
    for d, rate in zip(drafts, rates):
        rate = round(float(rate), 6)
        records.append(FieldRecord(**d, yield_kg=rate * d["area"], yield_rate=rate))
    return SyntheticDataset(records, bundles, truth)
