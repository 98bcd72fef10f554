"""On-disk formats: field CSV, per-location sensor CSVs, and artifact helpers.

Layout of a data directory::

    fields.csv                   one row per field record
    locations/loc_00000/         one directory per record, in fields.csv order
        optical.csv              timestamp, cloud_fraction, B02_p0..B02_p8, ..., B12_p8
        sar.csv                  timestamp, vv_p0..vv_p8, vh_p0..vh_p8
        rainfall.csv             timestamp, rate_mm_h
        meteo.csv                timestamp, air_temperature_k, lst_k, solar_radiation_w_m2, specific_humidity
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import os
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

from .acquisition import AcquisitionTile, MeteoSeries, RainfallSeries, SarAcquisition, center_crop_3x3
from .features import MSI_BANDS, FieldRecord, IngestionError, LocationBundle

FIELD_HEADER = ["District", "Latitude", "Longitude", "Season", "Frequency", "Harvest_Date", "Area_ha", "Yield_rate"]
PIXELS = [f"p{i}" for i in range(9)]
OPTICAL_HEADER = ["timestamp", "cloud_fraction"] + [f"{b}_{p}" for b in MSI_BANDS for p in PIXELS]
SAR_HEADER = ["timestamp"] + [f"{c}_{p}" for c in ("vv", "vh") for p in PIXELS]
RAIN_HEADER = ["timestamp", "rate_mm_h"]
METEO_HEADER = ["timestamp", "air_temperature_k", "lst_k", "solar_radiation_w_m2", "specific_humidity"]


def fmt(value: float) -> str:
    """Shortest text that reads back to the identical float."""
    return repr(float(value))


def location_dir(data_dir: Path, index: int) -> Path:
    return Path(data_dir) / "locations" / f"loc_{index:05d}"


def atomic_write(path: Path, data: str | bytes):
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_field_csv(path: Path, records):
    rows = [[r.district, fmt(r.latitude), fmt(r.longitude), r.season, r.frequency,
             r.harvest_date.isoformat(), fmt(r.area), fmt(r.yield_rate)] for r in records]
    atomic_write(path, _csv_text(FIELD_HEADER, rows))


def ingest_field_csv(path) -> list[FieldRecord]:
    """Parse and validate a field CSV; Yield_kg is derived as rate x area.

    Errors name the offending line (the header is line 1).
    """
    records = []
    seen: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise IngestionError(f"{path}: empty file, expected header {FIELD_HEADER}")
        if [h.strip() for h in header] != FIELD_HEADER:
            raise IngestionError(f"{path}: header {header} does not match {FIELD_HEADER}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(FIELD_HEADER):
                raise IngestionError(f"{path}: line {line}: expected {len(FIELD_HEADER)} columns, got {len(row)}")
            district, lat, lon, season, freq, harvest, area, rate = (c.strip() for c in row)
            try:
                lat, lon, area, rate = float(lat), float(lon), float(area), float(rate)
                harvest = dt.date.fromisoformat(harvest)
            except ValueError as exc:
                raise IngestionError(f"{path}: line {line}: {exc}") from exc
            try:
                record = FieldRecord(district, lat, lon, season, freq, harvest, area, rate * area, rate, line=line)
            except IngestionError as exc:
                raise IngestionError(f"{path}: {exc}") from exc
            if record.key in seen:
                raise IngestionError(f"{path}: line {line}: duplicate location key of line {seen[record.key]}")
            seen[record.key] = line
            records.append(record)
    return records


def write_location(directory: Path, bundle: LocationBundle):
    directory = Path(directory)
    rows = []
    for tile in bundle.tiles:
        row = [tile.timestamp.isoformat(), fmt(tile.cloud_fraction)]
        for band in MSI_BANDS:
            row += [fmt(v) for v in center_crop_3x3(tile.bands[band]).ravel()]
        rows.append(row)
    atomic_write(directory / "optical.csv", _csv_text(OPTICAL_HEADER, rows))

    rows = []
    for acq in bundle.sar:
        rows.append([acq.timestamp.isoformat()]
                    + [fmt(v) for v in center_crop_3x3(acq.vv).ravel()]
                    + [fmt(v) for v in center_crop_3x3(acq.vh).ravel()])
    atomic_write(directory / "sar.csv", _csv_text(SAR_HEADER, rows))

    if bundle.rainfall is not None:
        r = bundle.rainfall
        rows = [[str(t), fmt(v)] for t, v in zip(r.timestamps.astype("datetime64[s]"), r.rate)]
        atomic_write(directory / "rainfall.csv", _csv_text(RAIN_HEADER, rows))
    if bundle.meteo is not None:
        m = bundle.meteo
        rows = [[str(t), fmt(a), fmt(b), fmt(c), fmt(d)] for t, a, b, c, d in zip(
            m.timestamps.astype("datetime64[s]"), m.air_temperature, m.land_surface_temperature,
            m.solar_radiation, m.specific_humidity)]
        atomic_write(directory / "meteo.csv", _csv_text(METEO_HEADER, rows))


def _read(path: Path, header) -> pd.DataFrame | None:
    if not path.exists():
        return None
    frame = pd.read_csv(path, dtype={"timestamp": str}, float_precision="round_trip")
    if list(frame.columns) != header:
        raise IngestionError(f"{path}: header does not match {header}")
    return frame


def read_location(directory: Path) -> LocationBundle:
    directory = Path(directory)
    bundle = LocationBundle()
    optical = _read(directory / "optical.csv", OPTICAL_HEADER)
    if optical is not None:
        for row in optical.itertuples(index=False):
            values = np.asarray(row[2:], dtype=float).reshape(len(MSI_BANDS), 3, 3)
            bundle.tiles.append(AcquisitionTile(dt.date.fromisoformat(row[0]), float(row[1]),
                                                dict(zip(MSI_BANDS, values))))
    sar = _read(directory / "sar.csv", SAR_HEADER)
    if sar is not None:
        for row in sar.itertuples(index=False):
            values = np.asarray(row[1:], dtype=float).reshape(2, 3, 3)
            bundle.sar.append(SarAcquisition(dt.date.fromisoformat(row[0]), values[0], values[1]))
    rain = _read(directory / "rainfall.csv", RAIN_HEADER)
    if rain is not None:
        bundle.rainfall = RainfallSeries(rain["timestamp"].to_numpy(dtype="datetime64[s]"),
                                         rain["rate_mm_h"].to_numpy(dtype=float))
    meteo = _read(directory / "meteo.csv", METEO_HEADER)
    if meteo is not None:
        bundle.meteo = MeteoSeries(meteo["timestamp"].to_numpy(dtype="datetime64[s]"),
                                   *(meteo[c].to_numpy(dtype=float) for c in METEO_HEADER[1:]))
    return bundle


def write_dataset(data_dir: Path, records, bundles):
    data_dir = Path(data_dir)
    write_field_csv(data_dir / "fields.csv", records)
    for i, bundle in enumerate(bundles):
        write_location(location_dir(data_dir, i), bundle)


def read_dataset(data_dir: Path) -> tuple[list[FieldRecord], list[LocationBundle]]:
    data_dir = Path(data_dir)
    records = ingest_field_csv(data_dir / "fields.csv")
    bundles = [read_location(location_dir(data_dir, i)) for i in range(len(records))]
    return records, bundles


def provenance_header(config_hash: str, seed: int) -> str:
    return f"# config_hash={config_hash} seed={seed}\n"


def write_frame(path: Path, frame: pd.DataFrame, config_hash: str, seed: int):
    """CSV with a provenance comment line; floats written round-trip exact."""
    body = frame.to_csv(index=False, lineterminator="\n", float_format=None)
    atomic_write(path, provenance_header(config_hash, seed) + body)


def read_frame(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#", float_precision="round_trip")
