"""Anomaly-indicating features over one window of metrics.

Six categories are computed in a fixed order: point, frequency, trend,
temporal, distribution, cross-series. Metrics are visited in sorted-name
order, so a feature's value and position do not depend on which row a metric
occupies. Pairwise features use the pair (a, b) with a < b.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import os
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ..series import MetricFrame, utc_dates
from . import stats

log = logging.getLogger(__name__)

CATEGORIES = ("point", "frequency", "trend", "temporal", "distribution", "cross_series")


@dataclass(frozen=True)
class FeatureConfig:
    acf_lags: int = 5
    fourier_k: int = 3
    c3_lags: tuple[int, ...] = (1, 2, 3)
    tlcc_max_lag: int = 3
    mi_bins: int = 4
    rolling_sub_len: int = 6
    special_dates: tuple[dt.date, ...] = ()
    z_threshold: float = 3.5
    io_aspect: str = "io"

    def __post_init__(self):
        if self.mi_bins < 2:
            raise ValueError("mi_bins must be >= 2")
        if self.rolling_sub_len < 3:
            raise ValueError("rolling_sub_len must be >= 3")
        if self.acf_lags < 1 or self.fourier_k < 1 or self.tlcc_max_lag < 0:
            raise ValueError("lag counts must be positive")

    def check_length(self, n: int) -> None:
        lags = [self.acf_lags, self.tlcc_max_lag, *(2 * c for c in self.c3_lags)]
        if max(lags) >= n:
            raise ValueError(f"configured lags {lags} must be shorter than the window ({n})")
        if n < 2 * self.fourier_k:
            raise ValueError(f"window of {n} points is too short for {self.fourier_k} Fourier coefficients")


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")
        if len(self.names) != len(self.values):
            raise ValueError("names and values differ in length")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, (float(v) for v in self.values)))

    def select(self, names) -> np.ndarray:
        index = {n: i for i, n in enumerate(self.names)}
        missing = [n for n in names if n not in index]
        if missing:
            raise KeyError(f"features not present: {missing[:5]}")
        return self.values[[index[n] for n in names]]


Features = list[tuple[str, float]]


def _metrics(window: MetricFrame):
    order = sorted(range(window.m), key=lambda i: window.names[i])
    return [(window.names[i], window.values[i]) for i in order]


def _pairs(window: MetricFrame, same_aspect: bool):
    ms = _metrics(window)
    for (a, x), (b, y) in combinations(ms, 2):
        if same_aspect and window.aspects[a] != window.aspects[b]:
            continue
        yield a, x, b, y


def point_features(window: MetricFrame, config: FeatureConfig = FeatureConfig()) -> Features:
    out: Features = []
    for name, x in _metrics(window):
        ax = np.abs(x)
        out += [
            (f"{name}:min", x.min()),
            (f"{name}:max", x.max()),
            (f"{name}:absmin", ax.min()),
            (f"{name}:absmax", ax.max()),
            (f"{name}:zero_count", np.count_nonzero(x == 0)),
            (f"{name}:over_z_count", stats.modified_z_count(x, config.z_threshold)),
        ]
    special = set(config.special_dates)
    days = set(utc_dates(window.timestamps)) & special
    out.append(("window:special_day_count", len(days)))
    return out


def frequency_features(window: MetricFrame, config: FeatureConfig = FeatureConfig()) -> Features:
    n = window.length
    if n < 2 * config.fourier_k:
        raise ValueError(f"window of {n} points is too short for {config.fourier_k} Fourier coefficients")
    out: Features = []
    spectra = {}
    for name, x in _metrics(window):
        X = np.fft.rfft(x)
        spectra[name] = X
        for k in range(1, config.fourier_k + 1):
            c = X[k] if k < X.size else 0j
            out += [(f"{name}:fc{k}_real", c.real), (f"{name}:fc{k}_imag", c.imag),
                    (f"{name}:fc{k}_abs", abs(c))]
        cen, var, skew, kurt = stats.spectrum_shape(np.abs(X))
        out += [(f"{name}:spec_centroid", cen), (f"{name}:spec_variance", var),
                (f"{name}:spec_skew", skew), (f"{name}:spec_kurtosis", kurt)]
        if window.aspects[name] == config.io_aspect:
            sk_mean, sk_max = stats.spectral_kurtosis(x)
            out += [(f"{name}:stsk_mean", sk_mean), (f"{name}:stsk_max", sk_max)]
    for a, _, b, _ in _pairs(window, same_aspect=True):
        cross = spectra[a] * np.conj(spectra[b]) / n
        out.append((f"{a}|{b}:cpsd", float(np.abs(cross).mean())))
    return out


def trend_features(window: MetricFrame, config: FeatureConfig = FeatureConfig()) -> Features:
    out: Features = []
    r = min(config.rolling_sub_len, window.length)
    for name, x in _metrics(window):
        slope, icpt, se = stats.linear_fit(x)
        rolled = np.array([stats.linear_fit(x[i:i + r]) for i in range(x.size - r + 1)])
        out += [(f"{name}:lls_slope", slope), (f"{name}:lls_intercept", icpt), (f"{name}:lls_stderr", se),
                (f"{name}:lls_agg_slope", rolled[:, 0].mean()),
                (f"{name}:lls_agg_intercept", rolled[:, 1].mean()),
                (f"{name}:lls_agg_stderr", rolled[:, 2].mean())]
        out += [(f"{name}:c3_lag{lag}", stats.c3(x, lag)) for lag in config.c3_lags]
    return out


def temporal_features(window: MetricFrame, config: FeatureConfig = FeatureConfig()) -> Features:
    out: Features = []
    K = min(config.acf_lags, window.length - 1)
    for name, x in _metrics(window):
        r = stats.acf(x, K)
        p = stats.pacf_from_acf(r)
        d = np.diff(x)
        ad = np.abs(d)
        out += [(f"{name}:acf_mean", r[1:].mean()), (f"{name}:acf_var", r[1:].var()),
                (f"{name}:pacf_mean", p.mean()), (f"{name}:pacf_var", p.var()),
                (f"{name}:margin_sum", ad.sum()),
                (f"{name}:diff_min", d.min() if d.size else 0.0),
                (f"{name}:diff_max", d.max() if d.size else 0.0),
                (f"{name}:diff_absmin", ad.min() if d.size else 0.0),
                (f"{name}:diff_absmax", ad.max() if d.size else 0.0)]
    return out


def distribution_features(window: MetricFrame, config: FeatureConfig = FeatureConfig()) -> Features:
    out: Features = []
    for name, x in _metrics(window):
        std, skew, kurt = stats.moments(x)
        q10, q50, q90 = np.quantile(x, [0.1, 0.5, 0.9])
        out += [(f"{name}:std", std), (f"{name}:skew", skew), (f"{name}:kurt", kurt),
                (f"{name}:q10", q10), (f"{name}:q50", q50), (f"{name}:q90", q90)]
    _, jskew, jkurt = stats.moments(np.concatenate([x for _, x in _metrics(window)]))
    out += [("window:joint_skew", jskew), ("window:joint_kurt", jkurt)]
    if window.labels is not None:
        out.append(("window:anomaly_ratio", float(window.labels.mean())))
    return out


def cross_series_features(window: MetricFrame, config: FeatureConfig = FeatureConfig()) -> Features:
    out: Features = []
    if window.m < 2:
        return out
    for a, x, b, y in _pairs(window, same_aspect=False):
        peak, lag = stats.tlcc(x, y, config.tlcc_max_lag)
        out += [(f"{a}|{b}:corr", stats.pearson(x, y)),
                (f"{a}|{b}:tlcc_max", peak), (f"{a}|{b}:tlcc_lag", lag),
                (f"{a}|{b}:mi", stats.mutual_information(x, y, config.mi_bins))]
        if window.aspects[a] == window.aspects[b]:
            out.append((f"{a}|{b}:cid", stats.cid(x, y)))
    return out


CATEGORY_FUNCS = {
    "point": point_features,
    "frequency": frequency_features,
    "trend": trend_features,
    "temporal": temporal_features,
    "distribution": distribution_features,
    "cross_series": cross_series_features,
}


def extract_all(window: MetricFrame, config: FeatureConfig = FeatureConfig()) -> FeatureVector:
    config.check_length(window.length)
    names, values = [], []
    for cat in CATEGORIES:
        for name, v in CATEGORY_FUNCS[cat](window, config):
            v = float(v)
            if not np.isfinite(v):
                log.warning("feature %s is not finite; replaced with 0", name)
                v = 0.0
            names.append(name)
            values.append(v)
    return FeatureVector(tuple(names), np.asarray(values))


def feature_matrix(windows, config: FeatureConfig = FeatureConfig(), jobs: int = 1):
    """Extract features for many windows. Returns (names, rows) with rows (N, F)."""
    if jobs > 1 and len(windows) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            vecs = list(pool.map(lambda w: extract_all(w, config), windows))
    else:
        vecs = [extract_all(w, config) for w in windows]
    if not vecs:
        return (), np.zeros((0, 0))
    names = vecs[0].names
    for v in vecs[1:]:
        if v.names != names:
            raise ValueError("windows produced differing feature layouts")
    return names, np.stack([v.values for v in vecs])


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    category: str
    scope: str


def feature_catalog(names, aspects=None, config: FeatureConfig = FeatureConfig(),
                    length: int = 24, with_labels: bool = False) -> list[CatalogEntry]:
    """Enumerate the features ``extract_all`` emits for these metrics and window length."""
    names = tuple(names)
    probe = MetricFrame(np.arange(length) * 60, np.zeros((len(names), length)), names,
                        dict(aspects or {}), np.zeros(length, dtype=int) if with_labels else None)
    config.check_length(length)
    out = []
    for cat in CATEGORIES:
        for name, _ in CATEGORY_FUNCS[cat](probe, config):
            head = name.split(":", 1)[0]
            scope = "window" if head == "window" else "pair" if "|" in head else "metric"
            out.append(CatalogEntry(name, cat, scope))
    return out


def write_catalog(entries, path: str | os.PathLike, delimiter: str = ",") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(["name", "category", "scope"])
        for e in entries:
            w.writerow([e.name, e.category, e.scope])
