import datetime as dt

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ricens.acquisition import AcquisitionTile, MeteoSeries, RainfallSeries, SarAcquisition, TimeWindow
from ricens.features import (
    FEATURE_COLUMNS,
    FEATURE_SETS,
    MSI_BANDS,
    FieldRecord,
    IngestionError,
    LocationBundle,
    assemble_feature_table,
    band_statistics,
    encode_categoricals,
    index_statistics,
    meteo_features,
    rainfall_features,
    sar_feature_set,
)
from ricens.spectral import IndexId

D = dt.date


def sar(vv, vh, day=D(2022, 6, 1), shape=(3, 3)):
    return SarAcquisition(day, np.full(shape, vv), np.full(shape, vh))


def optical(values, day=D(2022, 6, 1), cloud=0.1):
    grids = {b: np.full((3, 3), 0.2) for b in MSI_BANDS}
    grids.update({b: np.broadcast_to(np.asarray(v, dtype=float), (3, 3)) for b, v in values.items()})
    return AcquisitionTile(day, cloud, grids)


def record(**kw):
    base = dict(district="ChauPhu", latitude=10.5, longitude=105.2, season="SA", frequency="D",
                harvest_date=D(2022, 8, 9), area=2.0, yield_kg=12000.0, yield_rate=6000.0)
    base.update(kw)
    return FieldRecord(**base)


def hours(start, n, step=3):
    return np.datetime64(start, "s") + np.arange(n) * np.timedelta64(step * 3600, "s")


def test_column_count_and_set_sizes():
    sizes = [len(FEATURE_SETS[k]) for k in FEATURE_SETS]
    assert sizes == [4, 36, 26, 6, 4, 8, 6, 4]
    assert len(FEATURE_COLUMNS) == 94 == len(set(FEATURE_COLUMNS))
    assert "TVI_mean" not in FEATURE_COLUMNS and "LSWI22_mean" not in FEATURE_COLUMNS


def test_sar_examples():
    assert sar_feature_set([sar(0.06, 0.02)]) == pytest.approx(
        {"VV_mean": 0.06, "VH_mean": 0.02, "VV_VH_ratio_mean": 3.0, "RVI_mean": 0.75})
    assert sar_feature_set([sar(0.04, 0.02), sar(0.08, 0.02)])["VV_mean"] == pytest.approx(0.06)
    same = sar_feature_set([sar(0.05, 0.05)])
    assert same["VV_VH_ratio_mean"] == pytest.approx(1.0) and same["RVI_mean"] == pytest.approx(0.5)
    assert all(np.isnan(v) for v in sar_feature_set([]).values())


def test_band_statistics_examples():
    assert band_statistics([optical({"B04": 0.3})], "B04") == pytest.approx(
        {"min": 0.3, "max": 0.3, "mean": 0.3, "var": 0.0})
    grid = np.array([[0.1, 0.2, 0.3]] * 3)
    stats = band_statistics([optical({"B04": grid})], "B04")
    assert stats == pytest.approx({"min": 0.1, "max": 0.3, "mean": 0.2, "var": 0.02 / 3})
    two = band_statistics([optical({"B04": 0.1}), optical({"B04": 0.5})], "B04")
    assert two == pytest.approx({"min": 0.1, "max": 0.5, "mean": 0.3, "var": 0.04})
    assert all(np.isnan(v) for v in band_statistics([], "B04").values())


def test_index_statistics_examples():
    const = index_statistics([optical({"B08": 0.5, "B04": 0.1})], IndexId.NDVI)
    assert const["mean"] == pytest.approx(0.666667, abs=1e-6) and const["var"] == 0.0
    flat = index_statistics([optical({"B08": 0.3, "B04": 0.3})], IndexId.kNDVI)
    assert flat == {"mean": 0.0, "var": 0.0}
    # one pixel with a zero denominator is skipped; others give SR = 2
    nir = np.full((3, 3), 0.4)
    red = np.full((3, 3), 0.2)
    red[0, 0] = 0.0
    skip = index_statistics([optical({"B08": nir, "B04": red})], IndexId.SR)
    assert skip == {"mean": 2.0, "var": 0.0}


def test_rainfall_examples():
    growth = TimeWindow(D(2022, 1, 1), D(2022, 1, 10))
    maturity = TimeWindow(D(2022, 1, 10), D(2022, 1, 20))
    stamps = np.concatenate([hours("2022-01-01", 10), hours("2022-01-12", 2)])
    rates = np.array([2.0] * 10 + [1.0, 3.0])
    out = rainfall_features(RainfallSeries(stamps, rates), growth, maturity)
    assert (out["Rainfall_growth_mean"], out["Rainfall_growth_max"], out["Rainfall_growth_sum"]) == (2, 2, 20)
    assert (out["Rainfall_maturity_mean"], out["Rainfall_maturity_max"], out["Rainfall_maturity_sum"]) == (2, 3, 4)
    dry = rainfall_features(RainfallSeries(stamps, np.zeros(12)), growth, maturity)
    assert set(dry.values()) == {0.0}
    missing = rainfall_features(None, growth, maturity)
    assert len(missing) == 6 and all(np.isnan(v) for v in missing.values())


def test_meteo_examples():
    window = TimeWindow(D(2022, 1, 1), D(2022, 1, 10))
    t = hours("2022-01-01", 2, step=24)
    out = meteo_features(MeteoSeries(t, [300.0, 302.0], [305, 305], [200, 200], [0.01, 0.01]), window)
    assert out["MET_temp_mean"] == 301.0 and out["MET_temp_var"] == 1.0
    assert out["LST_var"] == out["MET_solrad_var"] == out["MET_sh_var"] == 0.0
    single = meteo_features(MeteoSeries(t[:1], [300.0], [305], [200], [0.01]), window)
    assert single["MET_temp_var"] == 0.0
    outside = meteo_features(MeteoSeries(hours("2023-01-01", 2), [300.0, 301], [305, 305], [200, 200],
                                         [0.01, 0.01]), window)
    assert all(np.isnan(v) for v in outside.values())


def test_encode_examples():
    assert encode_categoricals(record(district="ChauPhu", season="SA")) == {
        "Season_Enc": 1.0, "Dist_ChauPhu": 1.0, "Dist_ChauThanh": 0.0, "Dist_ThoaiSon": 0.0}
    assert encode_categoricals(record(district="ThoaiSon", season="WS")) == {
        "Season_Enc": 0.0, "Dist_ChauPhu": 0.0, "Dist_ChauThanh": 0.0, "Dist_ThoaiSon": 1.0}


@given(st.sampled_from(["ChauPhu", "ChauThanh", "ThoaiSon"]), st.sampled_from(["WS", "SA"]))
def test_one_hot_sums_to_one(district, season):
    enc = encode_categoricals(record(district=district, season=season))
    assert enc["Dist_ChauPhu"] + enc["Dist_ChauThanh"] + enc["Dist_ThoaiSon"] == 1.0


def test_record_validation():
    with pytest.raises(IngestionError, match="season"):
        record(season="XX")
    with pytest.raises(IngestionError, match="district"):
        record(district="Hanoi")
    with pytest.raises(IngestionError):
        record(yield_rate=-1.0)


def _bundle(harvest, rng, n_tiles=6):
    tiles = [AcquisitionTile(harvest - dt.timedelta(days=75 - 8 * i), float(rng.uniform(0, 0.5)),
                             {b: rng.uniform(0.02, 0.6, (3, 3)) for b in MSI_BANDS}) for i in range(n_tiles)]
    sars = [SarAcquisition(harvest - dt.timedelta(days=85 - 9 * i), rng.uniform(0.02, 0.2, (4, 5)),
                           rng.uniform(0.005, 0.05, (4, 5))) for i in range(6)]
    start = np.datetime64(harvest - dt.timedelta(days=100), "s")
    rain = RainfallSeries(start + np.arange(800) * np.timedelta64(3 * 3600, "s"), rng.gamma(1, 1, 800))
    days = start + np.arange(100) * np.timedelta64(86400, "s")
    meteo = MeteoSeries(days, rng.uniform(298, 304, 100), rng.uniform(300, 310, 100),
                        rng.uniform(150, 250, 100), rng.uniform(0.015, 0.02, 100))
    return LocationBundle(tiles, sars, rain, meteo)


def test_assemble_table_shape_and_missing_row():
    rng = np.random.default_rng(0)
    recs = [record(latitude=10.5 + i * 0.01) for i in range(3)]
    bundles = [_bundle(r.harvest_date, rng) for r in recs[:2]] + [LocationBundle()]
    table = assemble_feature_table(recs, bundles)
    assert table.features.shape == (3, 94)
    assert list(table.columns) == FEATURE_COLUMNS
    assert not table.missing_mask[:2].any()
    sat_cols = [c for c in FEATURE_COLUMNS if not c.startswith(("Season", "Dist_"))]
    assert table.features.loc[2, sat_cols].isna().all()
    assert table.features.loc[2, "Season_Enc"] == 1.0
    assert table.design().columns[-1] == "Yield_kg"


def test_assemble_rejects_duplicate_keys():
    with pytest.raises(IngestionError, match="duplicate"):
        assemble_feature_table([record(), record()], [LocationBundle(), LocationBundle()])


@given(st.integers(0, 10_000))
def test_statistics_ordered_and_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    rec = record()
    bundle = _bundle(rec.harvest_date, rng)
    base = assemble_feature_table([rec], [bundle]).features.iloc[0]
    order = rng.permutation(len(bundle.tiles))
    shuffled = LocationBundle([bundle.tiles[i] for i in order], bundle.sar[::-1], bundle.rainfall, bundle.meteo)
    again = assemble_feature_table([rec], [shuffled]).features.iloc[0]
    pd.testing.assert_series_equal(base, again, rtol=1e-12)
    for band in MSI_BANDS:
        assert base[f"{band}_min"] <= base[f"{band}_mean"] <= base[f"{band}_max"]
    assert (base[[c for c in FEATURE_COLUMNS if c.endswith("_var")]] >= 0).all()


def test_constant_fields_have_zero_variance():
    harvest = D(2022, 8, 9)
    tiles = [optical({}, day=harvest - dt.timedelta(days=60 - i)) for i in range(3)]
    start = np.datetime64(harvest - dt.timedelta(days=100), "s")
    days = start + np.arange(100) * np.timedelta64(86400, "s")
    meteo = MeteoSeries(days, np.full(100, 300.0), np.full(100, 305.0), np.full(100, 200.0), np.full(100, 0.01))
    row = assemble_feature_table([record()], [LocationBundle(tiles, [], None, meteo)]).features.iloc[0]
    var_cols = [c for c in FEATURE_COLUMNS if c.endswith("_var")]
    assert (row[var_cols] == 0).all()


def test_cloudy_tiles_are_excluded():
    harvest = D(2022, 8, 9)
    clear = optical({"B04": 0.1}, day=harvest - dt.timedelta(days=50), cloud=0.2)
    cloudy = optical({"B04": 0.9}, day=harvest - dt.timedelta(days=45), cloud=0.8)
    row = assemble_feature_table([record()], [LocationBundle([clear, cloudy])]).features.iloc[0]
    assert row["B04_max"] == pytest.approx(0.1)
    loose = assemble_feature_table([record()], [LocationBundle([clear, cloudy])], max_cloud=1.0).features.iloc[0]
    assert loose["B04_max"] == pytest.approx(0.9)
