"""Optical vegetation/soil/water indices and SAR-derived quantities.

Every index accepts scalars or equally-shaped numpy arrays. Degenerate
pixels (zero denominator, negative TVI radicand) come back as NaN rather
than raising, so pooled statistics downstream can skip them.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from enum import Enum

import numpy as np


class DegenerateInputError(ValueError):
    """Raised when a SAR quantity is requested for zero backscatter."""


class IndexId(str, Enum):
    NDVI = "NDVI"
    TVI = "TVI"
    SR = "SR"
    EVI = "EVI"
    EVI2 = "EVI2"
    SAVI = "SAVI"
    RGVI = "RGVI"
    DVI = "DVI"
    MSR = "MSR"
    NIRv = "NIRv"
    kNDVI = "kNDVI"
    NDVIre = "NDVIre"
    NDRE1 = "NDRE1"
    NDRE2 = "NDRE2"
    NDWI = "NDWI"
    BSI = "BSI"
    LSWI16 = "LSWI16"
    LSWI22 = "LSWI22"
    CCI = "CCI"
    GCC = "GCC"


# Sentinel-2 band codes in the order the reflectance record stores them.
BAND_CODES = {
    "blue": "B02",
    "green": "B03",
    "red": "B04",
    "red_edge1": "B05",
    "red_edge2": "B06",
    "red_edge3": "B07",
    "nir": "B08",
    "swir1": "B11",
    "swir2": "B12",
}


@dataclass(frozen=True)
class BandReflectances:
    """Surface reflectance per band; fields may be floats or arrays."""

    blue: np.ndarray | float
    green: np.ndarray | float
    red: np.ndarray | float
    red_edge1: np.ndarray | float
    red_edge2: np.ndarray | float
    red_edge3: np.ndarray | float
    nir: np.ndarray | float
    swir1: np.ndarray | float
    swir2: np.ndarray | float

    def __post_init__(self):
        for f in fields(self):
            value = np.asarray(getattr(self, f.name), dtype=float)
            if not np.all(np.isfinite(value)):
                raise ValueError(f"band {f.name} has non-finite reflectance")
            if np.any(value < 0):
                raise ValueError(f"band {f.name} has negative reflectance")
            object.__setattr__(self, f.name, value)

    @classmethod
    def from_codes(cls, bands: dict) -> "BandReflectances":
        """Build from a mapping keyed by Sentinel-2 codes (``B02`` ...)."""
        return cls(**{name: bands[code] for name, code in BAND_CODES.items()})


@dataclass(frozen=True)
class SarBackscatter:
    """Linear-power VV and VH backscatter (not dB)."""

    vv: np.ndarray | float
    vh: np.ndarray | float

    def __post_init__(self):
        for name in ("vv", "vh"):
            value = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(value)):
                raise ValueError(f"{name} backscatter is non-finite")
            if np.any(value < 0):
                raise ValueError(f"{name} backscatter must be linear power >= 0")
            object.__setattr__(self, name, value)


def _ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den == 0, np.nan, num / np.where(den == 0, 1.0, den))
    return out[()] if out.ndim == 0 else out


def _normalized_difference(a, b):
    return _ratio(a - b, a + b)


def ndvi(b: BandReflectances):
    return _normalized_difference(b.nir, b.red)


def tvi(b: BandReflectances):
    radicand = np.asarray(ndvi(b)) + 0.5
    with np.errstate(invalid="ignore"):
        out = np.where(radicand < 0, np.nan, np.sqrt(np.abs(radicand)))
    return out[()] if out.ndim == 0 else out


def sr(b: BandReflectances):
    return _ratio(b.nir, b.red)


def evi(b: BandReflectances):
    return 2.5 * np.asarray(_ratio(b.nir - b.red, b.nir + 6.0 * b.red - 7.5 * b.blue + 1.0))


def evi2(b: BandReflectances):
    return 2.5 * np.asarray(_ratio(b.nir - b.red, b.nir + 2.4 * b.red + 1.0))


def savi(b: BandReflectances):
    return 1.5 * np.asarray(_ratio(b.nir - b.red, b.nir + b.red + 0.5))


def rgvi(b: BandReflectances):
    return 1.0 - np.asarray(_ratio(b.blue + b.red, b.nir + b.swir1 + b.swir2))


def dvi(b: BandReflectances):
    return np.asarray(b.nir - b.red)[()]


def msr(b: BandReflectances):
    # SR >= 0 for nonnegative bands, so the root is always real.
    s = np.asarray(sr(b))
    return _ratio(s - 1.0, np.sqrt(s + 1.0))


def nirv(b: BandReflectances):
    return np.asarray(ndvi(b)) * b.nir


def kndvi(b: BandReflectances):
    return np.tanh(np.asarray(ndvi(b)) ** 2)


def ndvi_re(b: BandReflectances):
    return _normalized_difference(b.nir, b.red_edge1)


def ndre1(b: BandReflectances):
    return _normalized_difference(b.red_edge2, b.red_edge1)


def ndre2(b: BandReflectances):
    return _normalized_difference(b.red_edge3, b.red_edge1)


def ndwi(b: BandReflectances):
    return _normalized_difference(b.green, b.nir)


def bsi(b: BandReflectances):
    return _normalized_difference(b.red + b.swir1, b.nir + b.blue)


def lswi16(b: BandReflectances):
    return _normalized_difference(b.nir, b.swir1)


def lswi22(b: BandReflectances):
    return _normalized_difference(b.nir, b.swir2)


def cci(b: BandReflectances):
    return _normalized_difference(b.green, b.red)


def gcc(b: BandReflectances):
    return _ratio(b.green, b.red + b.green + b.blue)


_INDEX_FUNCS = {
    IndexId.NDVI: ndvi,
    IndexId.TVI: tvi,
    IndexId.SR: sr,
    IndexId.EVI: evi,
    IndexId.EVI2: evi2,
    IndexId.SAVI: savi,
    IndexId.RGVI: rgvi,
    IndexId.DVI: dvi,
    IndexId.MSR: msr,
    IndexId.NIRv: nirv,
    IndexId.kNDVI: kndvi,
    IndexId.NDVIre: ndvi_re,
    IndexId.NDRE1: ndre1,
    IndexId.NDRE2: ndre2,
    IndexId.NDWI: ndwi,
    IndexId.BSI: bsi,
    IndexId.LSWI16: lswi16,
    IndexId.LSWI22: lswi22,
    IndexId.CCI: cci,
    IndexId.GCC: gcc,
}


def compute_optical_index(index: IndexId | str, bands: BandReflectances):
    """Evaluate one optical index.

    Returns a float (or array) with NaN marking pixels where the formula is
    undefined. Non-finite inputs are rejected when ``bands`` is built.
    """
    result = _INDEX_FUNCS[IndexId(index)](bands)
    if np.ndim(result) == 0:
        return float(result)
    return np.asarray(result, dtype=float)


def compute_rvi(sar: SarBackscatter):
    """Radar vegetation index VV / (VV + VH) in the linear domain."""
    total = sar.vv + sar.vh
    if np.any(total == 0):
        raise DegenerateInputError("RVI undefined for vv + vh == 0")
    out = sar.vv / total
    return float(out) if np.ndim(out) == 0 else out


def compute_vv_vh_ratio(sar: SarBackscatter):
    if np.any(sar.vh == 0):
        raise DegenerateInputError("VV/VH ratio undefined for vh == 0")
    out = sar.vv / sar.vh
    return float(out) if np.ndim(out) == 0 else out
