import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anticipator.features import (
    CATEGORIES, FeatureConfig, cross_series_features, distribution_features, extract_all,
    feature_catalog, feature_matrix, frequency_features, load_mask, point_features, save_mask,
    select_features, temporal_features, trend_features, write_catalog,
)
from anticipator.features import stats
from anticipator.series import MetricFrame

import oracles

DAY = 86400


def win(*rows, aspects=None, labels=None, interval=60, start=0):
    values = np.array(rows, dtype=float)
    ts = start + np.arange(values.shape[1]) * interval
    names = tuple(f"m{i}" for i in range(values.shape[0]))
    return MetricFrame(ts, values, names, aspects or {}, labels)


def feats(fn, w, cfg=FeatureConfig()):
    return dict(fn(w, cfg))


# --- point ---

def test_point_basic():
    d = feats(point_features, win([0, 0, 3]))
    assert (d["m0:zero_count"], d["m0:max"], d["m0:min"]) == (2, 3, 0)
    assert feats(point_features, win([-4, 2, 1]))["m0:absmin"] == 1


def test_over_z_count():
    assert feats(point_features, win([2, 2, 2, 2]))["m0:over_z_count"] == 0
    x = [1, 1, 1, 1, 100]
    assert oracles.modified_z_count(x) == 1
    assert feats(point_features, win(x))["m0:over_z_count"] == 1


def test_special_day_count():
    cfg = FeatureConfig(special_dates=(dt.date(1970, 1, 2), dt.date(1970, 1, 5)))
    w = win(np.arange(60), interval=3600, start=DAY - 3600 * 6)   # spans Jan 1 to Jan 3
    assert feats(point_features, w, cfg)["window:special_day_count"] == 1


# --- frequency ---

def test_constant_series_fourier_zero():
    d = feats(frequency_features, win([3.0] * 16))
    assert all(d[f"m0:fc{k}_{p}"] == 0 for k in (1, 2, 3) for p in ("real", "imag", "abs"))


def test_sinusoid_bin3_against_direct_dft():
    n = 32
    x = np.cos(2 * np.pi * 3 * np.arange(n) / n)
    cfg = FeatureConfig(fourier_k=5)
    d = feats(frequency_features, win(x), cfg)
    ref = oracles.dft(list(x))
    for k in range(1, 6):
        assert abs(d[f"m0:fc{k}_real"] - ref[k].real) < 1e-9
        assert abs(d[f"m0:fc{k}_imag"] - ref[k].imag) < 1e-9
    mags = [d[f"m0:fc{k}_abs"] for k in range(1, 6)]
    assert int(np.argmax(mags)) + 1 == 3 and abs(mags[2] - 16) < 1e-9


def test_cpsd_with_itself_is_power_spectrum():
    x = np.random.default_rng(0).normal(size=20)
    d = feats(frequency_features, win(x, x, aspects={"m0": "cpu", "m1": "cpu"}))
    ref = oracles.dft(list(x))[:11]
    assert abs(d["m0|m1:cpsd"] - np.mean([abs(c) ** 2 for c in ref]) / 20) < 1e-9


def test_cpsd_only_same_aspect():
    x = np.random.default_rng(0).normal(size=(2, 20))
    assert "m0|m1:cpsd" not in feats(frequency_features, win(*x))


def test_spectral_kurtosis_only_for_io():
    x = np.random.default_rng(1).normal(size=(2, 64))
    d = feats(frequency_features, win(*x, aspects={"m0": "io", "m1": "cpu"}))
    assert "m0:stsk_mean" in d and "m1:stsk_mean" not in d
    assert d["m0:stsk_max"] >= d["m0:stsk_mean"]


def test_spectrum_shape_matches_direct():
    x = np.random.default_rng(2).normal(size=24)
    mag = np.array([abs(c) for c in oracles.dft(list(x))[:13]])
    p = mag / mag.sum()
    k = np.arange(13)
    mu = float(p @ k)
    var = float(p @ (k - mu) ** 2)
    d = feats(frequency_features, win(x))
    assert abs(d["m0:spec_centroid"] - mu) < 1e-9 and abs(d["m0:spec_variance"] - var) < 1e-9
    assert abs(d["m0:spec_kurtosis"] - float(p @ (k - mu) ** 4) / var ** 2) < 1e-9


def test_window_too_short_for_fourier():
    with pytest.raises(ValueError):
        frequency_features(win([1.0, 2.0, 3.0]), FeatureConfig(fourier_k=3))


# --- trend ---

def test_linear_fit_exact():
    d = feats(trend_features, win([1, 2, 3, 4]), FeatureConfig(rolling_sub_len=3))
    assert (d["m0:lls_slope"], d["m0:lls_intercept"], d["m0:lls_stderr"]) == pytest.approx((1, 1, 0), abs=1e-12)


def test_linear_fit_normal_equations():
    y = [1, 2, 4, 8, 16]
    slope, icpt, se = oracles.ols_line(y)
    got = stats.linear_fit(np.array(y, dtype=float))
    assert got == pytest.approx((slope, icpt, se), abs=1e-9)


def test_c3_constant():
    d = feats(trend_features, win([2.0] * 12))
    assert all(d[f"m0:c3_lag{k}"] == pytest.approx(8.0) for k in (1, 2, 3))


def test_rolling_lls_mean():
    x = np.random.default_rng(3).normal(size=10)
    d = feats(trend_features, win(x), FeatureConfig(rolling_sub_len=4))
    subs = [oracles.ols_line(list(x[i:i + 4])) for i in range(7)]
    assert d["m0:lls_agg_slope"] == pytest.approx(np.mean([s[0] for s in subs]), abs=1e-12)
    assert d["m0:lls_agg_stderr"] == pytest.approx(np.mean([s[2] for s in subs]), abs=1e-12)


# --- temporal ---

def test_acf_lag0_and_margin():
    x = np.random.default_rng(4).normal(size=15)
    assert stats.acf(x, 3)[0] == pytest.approx(1.0)
    d = feats(temporal_features, win([1, 3, 2]), FeatureConfig(acf_lags=1))
    assert d["m0:margin_sum"] == 3
    assert (d["m0:diff_min"], d["m0:diff_max"], d["m0:diff_absmin"], d["m0:diff_absmax"]) == (-1, 2, 1, 2)


def test_pacf_lag1_equals_acf_lag1():
    x = np.random.default_rng(5).normal(size=30)
    r = stats.acf(x, 4)
    assert stats.pacf_from_acf(r)[0] == pytest.approx(r[1], abs=1e-15)


def test_pacf_ar1_regression_oracle():
    rng = np.random.default_rng(6)
    x = np.zeros(2000)
    for i in range(1, 2000):
        x[i] = 0.6 * x[i - 1] + rng.normal()
    p = stats.pacf_from_acf(stats.acf(x, 3))
    d = x - x.mean()
    for k in (1, 2, 3):
        # last coefficient of an order-k least-squares autoregression
        X = np.column_stack([d[k - j - 1:len(d) - j - 1] for j in range(k)])
        coef = np.linalg.lstsq(X, d[k:], rcond=None)[0]
        assert abs(p[k - 1] - coef[-1]) < 0.01
    assert abs(p[0] - 0.6) < 0.05 and abs(p[1]) < 0.06


# --- distribution ---

def test_distribution_constant():
    d = feats(distribution_features, win([4.0] * 8))
    assert (d["m0:std"], d["m0:skew"], d["m0:kurt"]) == (0, 0, 0)


def test_median_one_to_ten():
    assert feats(distribution_features, win(np.arange(1, 11)))["m0:q50"] == 5.5


def test_quantiles_sort_oracle():
    x = list(np.random.default_rng(7).normal(size=37))
    d = feats(distribution_features, win(x))
    for q in (0.1, 0.5, 0.9):
        assert abs(d[f"m0:q{int(q * 100)}"] - oracles.quantile(x, q)) < 1e-12


def test_anomaly_ratio_only_with_labels():
    assert "window:anomaly_ratio" not in feats(distribution_features, win([1, 2, 3, 4]))
    d = feats(distribution_features, win([1, 2, 3, 4], labels=np.array([0, 1, 1, 0])))
    assert d["window:anomaly_ratio"] == 0.5


# --- cross-series ---

def test_self_correlation_and_cid():
    x = np.random.default_rng(8).normal(size=20)
    d = feats(cross_series_features, win(x, x, aspects={"m0": "a", "m1": "a"}))
    assert d["m0|m1:corr"] == pytest.approx(1.0) and d["m0|m1:cid"] == 0.0


def test_tlcc_shift_two():
    z = np.random.default_rng(9).normal(size=40)
    x, y = z[2:], z[:-2]          # y_t = x_{t-2}
    d = feats(cross_series_features, win(x, y))
    assert d["m0|m1:tlcc_lag"] == 2 and d["m0|m1:tlcc_max"] == pytest.approx(1.0, abs=1e-12)
    assert (d["m0|m1:tlcc_max"], d["m0|m1:tlcc_lag"]) == pytest.approx(oracles.tlcc(list(x), list(y), 3))


def test_cross_series_skipped_for_univariate():
    assert cross_series_features(win([1, 2, 3, 4])) == []


def test_cid_only_same_aspect():
    x = np.random.default_rng(1).normal(size=(2, 12))
    assert "m0|m1:cid" not in feats(cross_series_features, win(*x))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_cross_series_properties(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 16))
    assert abs(stats.pearson(x, y)) <= 1
    assert stats.mutual_information(x, y, 4) >= 0
    assert stats.cid(x, y) == pytest.approx(stats.cid(y, x), rel=1e-12)


# --- full vector ---

def test_extract_all_order_and_gating():
    x = np.random.default_rng(10).normal(size=(1, 24))
    a = extract_all(win(*x))
    assert a.names == extract_all(win(*x)).names
    np.testing.assert_array_equal(a.values, extract_all(win(*x)).values)
    assert not any("|" in n for n in a.names)
    two = extract_all(win(*np.random.default_rng(10).normal(size=(2, 24))))
    assert any("|" in n for n in two.names)


def test_catalog_count_m2_default():
    # enumerated once by hand from the category definitions with default config:
    # point 6/metric + 1; frequency 3K+4 = 13/metric; trend 6+3 = 9/metric;
    # temporal 9/metric; distribution 6/metric + 2; cross-series 4/pair (distinct aspects)
    per_metric = 6 + 13 + 9 + 9 + 6
    want = 2 * per_metric + 1 + 2 + 4
    assert want == 93
    cat = feature_catalog(("a", "b"))
    assert len(cat) == want
    x = np.random.default_rng(11).normal(size=(2, 24))
    assert len(extract_all(MetricFrame(np.arange(24) * 60, x, ("a", "b"))).names) == want
    assert [e.category for e in cat] == sorted([e.category for e in cat], key=CATEGORIES.index)


def test_metric_row_order_invariance():
    x = np.random.default_rng(12).normal(size=(3, 24))
    a = extract_all(MetricFrame(np.arange(24) * 60, x, ("a", "b", "c"), {"a": "io", "b": "io", "c": "cpu"}))
    b = extract_all(MetricFrame(np.arange(24) * 60, x[[2, 0, 1]], ("c", "a", "b"),
                                {"a": "io", "b": "io", "c": "cpu"}))
    assert a.names == b.names
    np.testing.assert_array_equal(a.values, b.values)


def test_nonfinite_replaced(caplog):
    x = np.array([[1e308, -1e308] * 12])
    v = extract_all(win(*x))
    assert np.all(np.isfinite(v.values))


def test_catalog_file(tmp_path):
    p = tmp_path / "cat.csv"
    write_catalog(feature_catalog(("a",)), p)
    lines = p.read_text().splitlines()
    assert lines[0] == "name,category,scope" and lines[1].startswith("a:min,point,metric")


def test_feature_matrix_jobs():
    rng = np.random.default_rng(13)
    ws = [win(*rng.normal(size=(2, 24))) for _ in range(6)]
    n1, r1 = feature_matrix(ws)
    n2, r2 = feature_matrix(ws, jobs=3)
    assert n1 == n2
    np.testing.assert_array_equal(r1, r2)


def test_config_lag_check():
    with pytest.raises(ValueError):
        extract_all(win(np.arange(6.0)), FeatureConfig(acf_lags=6))
    with pytest.raises(ValueError):
        FeatureConfig(mi_bins=1)


# --- selection ---

def test_redundancy_drops_duplicate():
    rng = np.random.default_rng(14)
    a, b = rng.normal(size=(2, 30))
    rows = np.column_stack([a, b, a])
    assert select_features(rows, ["a", "b", "a2"]) == ("a", "b")


def test_redundancy_threshold_one_keeps_all():
    rows = np.random.default_rng(15).normal(size=(30, 5))
    assert select_features(rows, list("vwxyz"), threshold=1.0) == tuple("vwxyz")


def test_importance_ranks_label_copy_first():
    rng = np.random.default_rng(16)
    y = (rng.random(80) < 0.3).astype(float)
    rows = np.column_stack([rng.normal(size=80), y, rng.normal(size=80)])
    from anticipator.features.select import importance_scores
    imp = importance_scores(rows, y)
    assert int(np.argmax(imp)) == 1
    assert "label_copy" in select_features(rows, ["n1", "label_copy", "n2"], y, method="importance")


def test_selection_errors():
    rows = np.random.default_rng(0).normal(size=(5, 2))
    with pytest.raises(ValueError):
        select_features(rows, ["a", "b"], method="importance")
    with pytest.raises(ValueError):
        select_features(rows[:1], ["a", "b"])


def test_mask_file_roundtrip(tmp_path):
    p = tmp_path / "mask.txt"
    save_mask(("a:min", "b:max"), p)
    assert p.read_text() == "a:min\nb:max\n"
    assert load_mask(p) == ("a:min", "b:max")
