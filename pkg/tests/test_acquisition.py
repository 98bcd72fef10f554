import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ricens.acquisition import (
    AcquisitionTile,
    MeteoSeries,
    RainfallSeries,
    SarAcquisition,
    TimeWindow,
    center_crop_3x3,
    derive_windows,
    filter_acquisitions,
)

D = dt.date


def tile(day, cloud):
    return AcquisitionTile(day, cloud, {"B04": np.full((3, 3), 0.1)})


def test_windows_for_reference_harvest():
    w = derive_windows(D(2022, 8, 9))
    assert (w["growth"].start, w["growth"].end) == (D(2022, 5, 11), D(2022, 7, 10))
    assert (w["maturity"].start, w["maturity"].end) == (D(2022, 7, 10), D(2022, 8, 9))
    assert (w["s2"].start, w["s2"].end) == (D(2022, 5, 21), D(2022, 7, 10))


@given(st.dates(D(2000, 1, 1), D(2060, 12, 31)))
def test_window_lengths(harvest):
    w = derive_windows(harvest)
    assert (w["growth"].days, w["maturity"].days, w["s2"].days) == (60, 30, 50)
    assert w["growth"].end == w["maturity"].start == w["s2"].end


def test_window_is_half_open():
    w = TimeWindow(D(2022, 1, 1), D(2022, 1, 3))
    assert w.contains(D(2022, 1, 1)) and w.contains(D(2022, 1, 2)) and not w.contains(D(2022, 1, 3))
    stamps = np.array(["2021-12-31T23:59:59", "2022-01-01T00:00:00", "2022-01-02T23:00:00", "2022-01-03T00:00:00"],
                      dtype="datetime64[s]")
    np.testing.assert_array_equal(w.mask(stamps), [False, True, True, False])
    with pytest.raises(ValueError):
        TimeWindow(D(2022, 1, 3), D(2022, 1, 3))


def test_filter_examples():
    window = TimeWindow(D(2022, 1, 1), D(2022, 2, 1))
    tiles = [tile(D(2022, 1, 5), c) for c in (0.1, 0.7, 0.5)]
    kept = filter_acquisitions(tiles, 0.6, window)
    assert [t.cloud_fraction for t in kept] == [0.1, 0.5]
    assert filter_acquisitions(tiles, 1.0, window) == tiles
    outside = [tile(D(2021, 6, 1), 0.0), tile(D(2022, 2, 1), 0.0)]
    assert filter_acquisitions(outside, 1.0, window) == []
    with pytest.raises(ValueError):
        filter_acquisitions(tiles, 1.5, window)


@given(st.lists(st.tuples(st.integers(0, 60), st.floats(0, 1)), max_size=20),
       st.floats(0, 1), st.floats(0, 1))
def test_filter_idempotent_and_monotone(specs, a, b):
    window = TimeWindow(D(2022, 1, 10), D(2022, 2, 10))
    tiles = [tile(D(2022, 1, 1) + dt.timedelta(days=d), c) for d, c in specs]
    lo, hi = sorted((a, b))
    kept_lo = filter_acquisitions(tiles, lo, window)
    kept_hi = filter_acquisitions(tiles, hi, window)
    assert filter_acquisitions(kept_lo, lo, window) == kept_lo
    assert all(any(t is u for u in kept_hi) for t in kept_lo)


def test_crop_examples():
    g3 = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(center_crop_3x3(g3), g3)
    g5 = np.arange(1, 26).reshape(5, 5)
    np.testing.assert_array_equal(center_crop_3x3(g5), [[7, 8, 9], [12, 13, 14], [17, 18, 19]])
    g43 = np.arange(12).reshape(4, 3)
    np.testing.assert_array_equal(center_crop_3x3(g43), g43[1:4])
    with pytest.raises(ValueError):
        center_crop_3x3(np.zeros((2, 5)))


@given(st.integers(3, 9), st.integers(3, 9))
def test_crop_is_submatrix(h, w):
    grid = np.arange(h * w, dtype=float).reshape(h, w)
    out = center_crop_3x3(grid)
    r, c = divmod(int(out[0, 0]), w)
    np.testing.assert_array_equal(out, grid[r:r + 3, c:c + 3])
    if h % 2 and w % 2:
        assert out[1, 1] == grid[h // 2, w // 2]


def test_series_validation():
    t = np.array(["2022-01-01", "2022-01-02"], dtype="datetime64[s]")
    with pytest.raises(ValueError):
        RainfallSeries(t[::-1], [0.0, 1.0])
    with pytest.raises(ValueError):
        RainfallSeries(t, [0.0, -1.0])
    with pytest.raises(ValueError):
        MeteoSeries(t, [300, 0.0], [300, 300], [200, 200], [0.01, 0.01])
    with pytest.raises(ValueError):
        SarAcquisition(D(2022, 1, 1), np.full((3, 3), 0.1), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        AcquisitionTile(D(2022, 1, 1), 1.2, {})
