"""Acquisition windows, cloud filtering and 3x3 crops."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

GROWTH_START_DAYS = 90
MATURITY_DAYS = 30
S2_WINDOW_DAYS = 50
DEFAULT_MAX_CLOUD = 0.6


@dataclass(frozen=True)
class TimeWindow:
    """Half-open date interval ``[start, end)``."""

    start: dt.date
    end: dt.date

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"window start {self.start} must precede end {self.end}")

    @property
    def days(self) -> int:
        return (self.end - self.start).days

    def contains(self, when: dt.date | dt.datetime) -> bool:
        if isinstance(when, dt.datetime):
            when = when.date()
        return self.start <= when < self.end

    def mask(self, stamps) -> np.ndarray:
        """Vectorised membership for an array of ``datetime64`` stamps."""
        stamps = np.asarray(stamps, dtype="datetime64[s]")
        lo = np.datetime64(self.start, "s")
        hi = np.datetime64(self.end, "s")
        return (stamps >= lo) & (stamps < hi)


@dataclass(frozen=True)
class AcquisitionTile:
    """One optical scene cut to the field: band name -> HxW reflectance grid."""

    timestamp: dt.date
    cloud_fraction: float
    bands: dict = field(repr=False)

    def __post_init__(self):
        if not 0.0 <= self.cloud_fraction <= 1.0:
            raise ValueError(f"cloud_fraction {self.cloud_fraction} outside [0, 1]")
        grids = {}
        for name, grid in self.bands.items():
            grid = np.asarray(grid, dtype=float)
            if grid.ndim != 2 or min(grid.shape) < 3:
                raise ValueError(f"band {name} grid must be at least 3x3, got {grid.shape}")
            if not np.all(np.isfinite(grid)):
                raise ValueError(f"band {name} has non-finite pixels")
            grids[name] = grid
        object.__setattr__(self, "bands", grids)


@dataclass(frozen=True)
class SarAcquisition:
    timestamp: dt.date
    vv: np.ndarray
    vh: np.ndarray

    def __post_init__(self):
        for name in ("vv", "vh"):
            grid = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(grid)) or np.any(grid <= 0):
                raise ValueError(f"SAR {name} values must be finite and > 0")
            object.__setattr__(self, name, grid)


def _check_series(stamps) -> np.ndarray:
    stamps = np.asarray(stamps, dtype="datetime64[s]")
    if stamps.size > 1 and np.any(np.diff(stamps) <= np.timedelta64(0, "s")):
        raise ValueError("timestamps must be strictly increasing")
    return stamps


@dataclass(frozen=True)
class RainfallSeries:
    """Precipitation rate samples in mm/h."""

    timestamps: np.ndarray
    rate: np.ndarray

    def __post_init__(self):
        stamps = _check_series(self.timestamps)
        rate = np.asarray(self.rate, dtype=float)
        if rate.shape != stamps.shape:
            raise ValueError("rainfall timestamps and rates differ in length")
        if np.any(rate < 0) or not np.all(np.isfinite(rate)):
            raise ValueError("rainfall rates must be finite and >= 0")
        object.__setattr__(self, "timestamps", stamps)
        object.__setattr__(self, "rate", rate)


METEO_CHANNELS = ("MET_temp", "LST", "MET_solrad", "MET_sh")


@dataclass(frozen=True)
class MeteoSeries:
    """Air temperature and LST (K), solar radiation (W/m2), specific humidity (kg/kg)."""

    timestamps: np.ndarray
    air_temperature: np.ndarray
    land_surface_temperature: np.ndarray
    solar_radiation: np.ndarray
    specific_humidity: np.ndarray

    def __post_init__(self):
        stamps = _check_series(self.timestamps)
        object.__setattr__(self, "timestamps", stamps)
        for name in ("air_temperature", "land_surface_temperature",
                     "solar_radiation", "specific_humidity"):
            values = np.asarray(getattr(self, name), dtype=float)
            if values.shape != stamps.shape:
                raise ValueError(f"meteo channel {name} length mismatch")
            object.__setattr__(self, name, values)
        if np.any(self.air_temperature <= 0) or np.any(self.land_surface_temperature <= 0):
            raise ValueError("temperatures must be positive kelvin")

    def channels(self) -> dict:
        return {
            "MET_temp": self.air_temperature,
            "LST": self.land_surface_temperature,
            "MET_solrad": self.solar_radiation,
            "MET_sh": self.specific_humidity,
        }


def derive_windows(harvest_date: dt.date, growth_start_days: int = GROWTH_START_DAYS,
                   maturity_days: int = MATURITY_DAYS, s2_days: int = S2_WINDOW_DAYS) -> dict[str, TimeWindow]:
    """Growth, maturity and Sentinel-2 windows anchored on the harvest date.

    With the defaults, growth covers 90 to 30 days before harvest, maturity
    the last 30 days, and the optical window the 50 days that end where
    maturity begins.
    """
    maturity_start = harvest_date - dt.timedelta(days=maturity_days)
    return {
        "growth": TimeWindow(harvest_date - dt.timedelta(days=growth_start_days), maturity_start),
        "maturity": TimeWindow(maturity_start, harvest_date),
        "s2": TimeWindow(maturity_start - dt.timedelta(days=s2_days), maturity_start),
    }


def filter_acquisitions(tiles, max_cloud: float, window: TimeWindow) -> list:
    """Keep tiles inside ``window`` whose cloud fraction is at most ``max_cloud``."""
    if not 0.0 <= max_cloud <= 1.0:
        raise ValueError(f"max_cloud {max_cloud} outside [0, 1]")
    return [t for t in tiles if t.cloud_fraction <= max_cloud and window.contains(t.timestamp)]


def center_crop_3x3(grid) -> np.ndarray:
    """Cut the 3x3 block around (H // 2, W // 2).

    For even sides the centre index is clamped so the block stays inside the
    grid; a 4-row input yields rows 1..3.
    """
    grid = np.asarray(grid)
    if grid.ndim != 2 or grid.shape[0] < 3 or grid.shape[1] < 3:
        raise ValueError(f"need a grid of at least 3x3, got shape {grid.shape}")
    rows = _window_start(grid.shape[0])
    cols = _window_start(grid.shape[1])
    return grid[rows:rows + 3, cols:cols + 3].copy()


def _window_start(n: int) -> int:
    return min(n // 2 - 1, n - 3)
