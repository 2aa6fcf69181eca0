import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smest.core import ConfigError, ValidationError
from smest.experiments.specs import parse_label
from smest.features import (
    FeatureMatrix,
    assemble,
    band_means,
    column_medians,
    era5_columns,
    era5_lag_stack,
    feature_columns,
    impute,
    read_feature_csv,
    sar_features,
    spectral_indices,
    temporal_dynamics,
    write_feature_csv,
)
from smest.ingestion import BandId, Era5Table

from conftest import D0, s1_patch, s2_patch

B = BandId


def test_band_means_examples():
    p = s2_patch(size=32, value=0.4)
    for w in (2, 16, 32):
        assert band_means(p, w)[B.B04] == pytest.approx(0.4)
    assert B.SCL not in band_means(p, 32)

    p = s2_patch(size=16)
    p.pixels[3] = np.arange(256, dtype=np.float32).reshape(16, 16)
    assert band_means(p, 16)[B.B04] == pytest.approx(127.5)

    p = s2_patch(size=32)
    p.pixels[3, :, :16] = 0.2
    p.pixels[3, :, 16:] = 0.4
    assert band_means(p, 8)[B.B04] == pytest.approx(0.3)


def test_band_means_central_block_and_nonfinite():
    p = s2_patch(size=16, value=1.0)
    p.pixels[0, 6:10, 6:10] = 5.0
    assert band_means(p, 4)[B.B01] == 5.0
    p.pixels[1, 6:10, 6:10] = np.nan
    assert math.isnan(band_means(p, 4)[B.B02])
    p.pixels[2, 6, 6] = np.inf
    assert band_means(p, 4)[B.B03] == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        band_means(p, 32)
    with pytest.raises(ValidationError):
        band_means(p, 3)


def test_spectral_index_examples():
    assert spectral_indices({B.B08: 0.3, B.B04: 0.3}).ndvi == 0.0
    assert spectral_indices({B.B08: 0.5, B.B04: 0.1}).ndvi == pytest.approx(0.4 / 0.6, abs=1e-15)
    assert spectral_indices({B.B11: 0.2, B.B8A: 0.4}).msi == 0.5
    idx = spectral_indices({B.B03: 0.0, B.B08: 0.0, B.B04: 0.1})
    assert math.isnan(idx.ndwi)
    assert idx.ndvi == -1.0
    # a missing band only affects its own index
    only = spectral_indices({B.B08: 0.4, B.B04: 0.2})
    assert not math.isnan(only.ndvi) and math.isnan(only.ndmi) and math.isnan(only.msi)


refl = st.floats(0.0, 1.0, allow_nan=False)


@given(refl, refl, refl, refl, refl)
def test_index_bounds_and_antisymmetry(b3, b4, b8, b8a, b11):
    idx = spectral_indices({B.B03: b3, B.B04: b4, B.B08: b8, B.B8A: b8a, B.B11: b11})
    for v in (idx.ndvi, idx.ndwi, idx.ndmi):
        assert math.isnan(v) or -1.0 <= v <= 1.0
    assert math.isnan(idx.msi) or idx.msi >= 0
    swapped = spectral_indices({B.B08: b4, B.B04: b8})
    if b4 + b8 > 0:
        assert swapped.ndvi == -idx.ndvi


def test_sar_examples():
    assert sar_features({B.VV: 1.0, B.VH: 0.1})["vv"] == 0.0
    f = sar_features({B.VV: 0.01, B.VH: 0.001})
    assert f["vv"] == pytest.approx(-20.0) and f["vh"] == pytest.approx(-30.0)
    assert f["ratio"] == pytest.approx(0.1)
    assert all(math.isnan(v) for v in sar_features({B.VV: 0.0, B.VH: 0.1}).values())


def test_temporal_dynamics_examples():
    assert temporal_dynamics(0.5, 0.5, 5) == (0.0, 0.0)
    d, r = temporal_dynamics(0.6, 0.4, 4)
    assert d == pytest.approx(0.2) and r == pytest.approx(0.05)
    assert all(math.isnan(v) for v in temporal_dynamics(0.6, None, None))
    with pytest.raises(ValidationError):
        temporal_dynamics(0.6, 0.4, 0)


def era5_table(sid="A", days=range(D0 - 25, D0 + 1), skip=()):
    return Era5Table({(sid, d): np.arange(13, dtype=float) + d for d in days if d not in skip})


def test_era5_stack_examples():
    t = era5_table()
    assert era5_lag_stack(t, "A", D0, 0).shape == (13,)
    assert len(era5_columns(10)) == 143
    stack = era5_lag_stack(t, "A", D0, 20)
    assert stack.shape == (273,) and not np.isnan(stack).any()
    gap = era5_lag_stack(era5_table(skip={D0 - 7}), "A", D0, 20)
    assert np.isnan(gap).sum() == 13
    assert np.isnan(gap[7 * 13:8 * 13]).all()
    assert era5_columns(1)[13] == "precip_total_lag1"
    with pytest.raises(ValidationError):
        era5_lag_stack(t, "A", D0, 21)


@given(st.integers(0, 19))
def test_era5_prefix_consistency(lag):
    t = era5_table()
    short, long = era5_lag_stack(t, "A", D0, lag), era5_lag_stack(t, "A", D0, lag + 1)
    assert np.array_equal(short, long[:len(short)])
    assert era5_columns(lag + 1)[:len(short)] == era5_columns(lag)


@pytest.mark.parametrize("label, lag, n", [
    ("S2_curr_day", 20, 12 + 4 + 32 + 273),
    ("Prithvi_S2", 20, 768 + 273),
    ("S1_DESC_curr_day", 0, 3 + 6 + 13),
    ("S2_curr_day + S1_DESC_closest", 10, 48 + 9 + 143),
    ("Prithvi_S2 + indices + S1_DESC_closest", 20, 4 + 8 + 9 + 273 + 768),
])
def test_column_counts(label, lag, n):
    assert len(feature_columns(parse_label(label), lag)) == n


def test_assemble_empty_and_missing_embeddings():
    spec = parse_label("S2_curr_day")
    m, y = assemble([], spec, 20, era5_table())
    assert m.values.shape == (0, 321) and y.shape == (0,)
    with pytest.raises(ConfigError):
        assemble([], parse_label("Prithvi_S2"), 20, era5_table(), None)


def test_impute_with_medians():
    v = np.array([[1.0, np.nan, np.nan], [3.0, 2.0, np.nan], [np.nan, 4.0, np.nan]])
    med = column_medians(v)
    assert med.tolist() == [2.0, 3.0, 0.0]
    out = impute(v, med)
    assert out.tolist() == [[1.0, 3.0, 0.0], [3.0, 2.0, 0.0], [2.0, 4.0, 0.0]]
    assert np.isnan(v[2, 0])  # input untouched


def test_feature_csv_round_trip(tmp_path):
    m = FeatureMatrix(["a", "b"], np.array([[1.5, np.nan], [0.1, 2.0]]), [("A", D0), ("B", D0 + 1)])
    y = np.array([0.2, 0.3])
    write_feature_csv(tmp_path / "f.csv", m, y)
    back, y2 = read_feature_csv(tmp_path / "f.csv")
    assert back.column_names == ["a", "b"] and back.provenance == m.provenance
    assert np.array_equal(back.values, m.values, equal_nan=True)
    assert np.array_equal(y2, y)


def test_rewritten_patch_is_read_again(tmp_path):
    from smest.features import _s1_vector
    from smest.ingestion import write_patch

    path = tmp_path / "p.eopc"
    write_patch(path, s1_patch(vv=0.01, vh=0.002))
    first = _s1_vector(path, 16)
    write_patch(path, s1_patch(vv=0.02, vh=0.001))
    assert _s1_vector(path, 16) != first
