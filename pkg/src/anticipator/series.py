"""Multivariate metric frames: ingestion, splitting, scaling, windowing, synthetic data."""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

STD_FLOOR = 1e-8


class FrameError(ValueError):
    """Raised when input data violates a MetricFrame invariant."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MetricFrame:
    """m uniformly sampled metrics over L points.

    ``values`` is stored metrics-major (m rows, L columns). ``aspects`` maps
    each metric name to a grouping tag; metrics without an explicit tag form
    their own aspect.
    """

    timestamps: np.ndarray
    values: np.ndarray
    names: tuple[str, ...]
    aspects: Mapping[str, str] = field(default_factory=dict)
    labels: np.ndarray | None = None

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype=np.int64).reshape(-1)
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim == 1:
            vals = vals.reshape(1, -1)
        names = tuple(str(n) for n in self.names)
        if vals.ndim != 2 or vals.shape[0] != len(names) or vals.shape[1] != ts.size:
            raise FrameError(
                f"values shape {vals.shape} does not match {len(names)} names x {ts.size} timestamps")
        if len(set(names)) != len(names):
            raise FrameError("metric names must be unique")
        if ts.size >= 2:
            steps = np.diff(ts)
            if np.any(steps == 0):
                raise FrameError("duplicate timestamp")
            if np.any(steps < 0):
                raise FrameError("timestamps must be strictly increasing")
            if np.any(steps != steps[0]):
                raise FrameError("non-uniform interval")
        aspects = {n: str(self.aspects.get(n, n)) for n in names}
        labels = None
        if self.labels is not None:
            labels = np.array(self.labels).reshape(-1)
            if labels.size != ts.size:
                raise FrameError("labels length does not match timestamps")
            if not np.all((labels == 0) | (labels == 1)):
                raise FrameError("labels must be 0/1")
            labels = _readonly(labels.astype(np.int8))
        object.__setattr__(self, "timestamps", _readonly(ts))
        object.__setattr__(self, "values", _readonly(vals))
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "aspects", aspects)
        object.__setattr__(self, "labels", labels)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.length

    @property
    def interval(self) -> int | None:
        if self.length < 2:
            return None
        return int(self.timestamps[1] - self.timestamps[0])

    def slice(self, start: int, stop: int) -> "MetricFrame":
        return MetricFrame(
            self.timestamps[start:stop],
            self.values[:, start:stop],
            self.names,
            self.aspects,
            None if self.labels is None else self.labels[start:stop],
        )

    def with_values(self, values: np.ndarray) -> "MetricFrame":
        return MetricFrame(self.timestamps, values, self.names, self.aspects, self.labels)

    def without_labels(self) -> "MetricFrame":
        return MetricFrame(self.timestamps, self.values, self.names, self.aspects, None)


@dataclass(frozen=True)
class FrameSchema:
    """Column mapping for delimiter-separated metric files.

    ``metrics=None`` takes every column other than the timestamp and label.
    """

    timestamp: str = "timestamp"
    metrics: tuple[str, ...] | None = None
    label: str | None = "label"
    aspects: Mapping[str, str] = field(default_factory=dict)
    delimiter: str = ","


def _parse_float(cell: str, where: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise FrameError(f"non-numeric cell {cell!r} at {where}") from None
    if not math.isfinite(v):
        raise FrameError(f"non-numeric cell {cell!r} at {where}")
    return v


def load_frame(path: str | os.PathLike, schema: FrameSchema | None = None) -> MetricFrame:
    schema = schema or FrameSchema()
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such data file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FrameError("empty data file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]

    if schema.timestamp not in header:
        raise FrameError(f"timestamp column {schema.timestamp!r} missing")
    label_col = schema.label if schema.label in header else None
    if schema.metrics is None:
        metrics = [h for h in header if h not in (schema.timestamp, label_col)]
    else:
        metrics = list(schema.metrics)
        missing = [c for c in metrics if c not in header]
        if missing:
            raise FrameError(f"metric columns missing: {missing}")
    if not metrics:
        raise FrameError("no metric columns")

    t_idx = header.index(schema.timestamp)
    m_idx = [header.index(c) for c in metrics]
    ts, vals, labs = [], [], []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise FrameError(f"line {lineno}: expected {len(header)} cells, got {len(row)}")
        cell = row[t_idx].strip()
        try:
            ts.append(int(cell))
        except ValueError:
            raise FrameError(f"non-numeric cell {cell!r} at line {lineno}") from None
        vals.append([_parse_float(row[i].strip(), f"line {lineno}") for i in m_idx])
        if label_col is not None:
            labs.append(_parse_float(row[header.index(label_col)].strip(), f"line {lineno}"))

    ts_arr = np.asarray(ts, dtype=np.int64)
    order = np.argsort(ts_arr, kind="stable")
    ts_arr = ts_arr[order]
    if ts_arr.size and np.any(np.diff(ts_arr) == 0):
        raise FrameError("duplicate timestamp")
    values = np.asarray(vals, dtype=np.float64).reshape(len(ts), len(metrics))[order].T
    labels = None
    if label_col is not None:
        labels = np.asarray(labs)[order]
    return MetricFrame(ts_arr, values, tuple(metrics), dict(schema.aspects), labels)


def frame_text(frame: MetricFrame, delimiter: str = ",") -> str:
    """The delimited text ``load_frame`` reads back (floats in repr form)."""
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    header = ["timestamp", *frame.names]
    if frame.labels is not None:
        header.append("label")
    w.writerow(header)
    for j in range(frame.length):
        row = [str(int(frame.timestamps[j]))] + [repr(float(v)) for v in frame.values[:, j]]
        if frame.labels is not None:
            row.append(str(int(frame.labels[j])))
        w.writerow(row)
    return buf.getvalue()


def save_frame(frame: MetricFrame, path: str | os.PathLike, delimiter: str = ",") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(frame_text(frame, delimiter))


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.6
    val: float = 0.1
    test: float = 0.3

    def __post_init__(self):
        fr = (self.train, self.val, self.test)
        if any(f <= 0 for f in fr):
            raise ValueError("split fractions must be positive")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


def split_chronological(frame: MetricFrame, spec: SplitSpec = SplitSpec()):
    """Cut the timeline into train/val/test frames at floor(frac * L)."""
    L = frame.length
    b1 = int(math.floor(spec.train * L + 1e-9))
    b2 = int(math.floor((spec.train + spec.val) * L + 1e-9))
    if b1 <= 0 or b2 <= b1 or L <= b2:
        raise FrameError(f"empty split for L={L} with fractions {spec}")
    return frame.slice(0, b1), frame.slice(b1, b2), frame.slice(b2, L)


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Standardise an array whose leading metric axis is at position -2."""
        return (values - self.mean[:, None]) / self.std[:, None]

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.std[:, None] + self.mean[:, None]


def fit_scaler(frame: MetricFrame, std_floor: float = STD_FLOOR) -> Scaler:
    mean = frame.values.mean(axis=1)
    std = np.maximum(frame.values.std(axis=1), std_floor)
    return Scaler(_readonly(mean), _readonly(std))


def apply_scaler(frame: MetricFrame, scaler: Scaler) -> MetricFrame:
    return frame.with_values(scaler.apply(frame.values))


def invert_scaler(frame: MetricFrame, scaler: Scaler) -> MetricFrame:
    return frame.with_values(scaler.invert(frame.values))


@dataclass(frozen=True)
class WindowSpec:
    context_len: int
    forecast_len: int
    stride: int = 1

    def __post_init__(self):
        if self.context_len < 1 or self.forecast_len < 1:
            raise ValueError("context_len and forecast_len must be positive")
        if self.forecast_len >= self.context_len:
            raise ValueError("forecast_len must be smaller than context_len")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclass(frozen=True)
class CovariateConfig:
    """Calendar covariates: time-of-day and day-of-week phases plus a special-day flag."""

    special_dates: tuple[dt.date, ...] = ()

    @property
    def dim(self) -> int:
        return 5


def parse_dates(dates: Iterable[str | dt.date]) -> tuple[dt.date, ...]:
    out = []
    for d in dates:
        out.append(d if isinstance(d, dt.date) else dt.date.fromisoformat(str(d).strip()))
    return tuple(sorted(set(out)))


def utc_dates(timestamps: np.ndarray) -> list[dt.date]:
    days = np.asarray(timestamps, dtype=np.int64) // 86400
    epoch = dt.date(1970, 1, 1)
    return [epoch + dt.timedelta(days=int(d)) for d in days]


def calendar_covariates(timestamps: np.ndarray, config: CovariateConfig = CovariateConfig()) -> np.ndarray:
    ts = np.asarray(timestamps, dtype=np.int64)
    day_phase = 2 * np.pi * (ts % 86400) / 86400.0
    # 1970-01-01 was a Thursday; shift so Monday is phase 0
    week_phase = 2 * np.pi * (((ts // 86400) + 3) % 7 + (ts % 86400) / 86400.0) / 7.0
    special = set(config.special_dates)
    flag = np.array([d in special for d in utc_dates(ts)], dtype=np.float64)
    return np.stack([np.sin(day_phase), np.cos(day_phase),
                     np.sin(week_phase), np.cos(week_phase), flag])


@dataclass(frozen=True)
class Window:
    start: int
    timestamps: np.ndarray
    context: np.ndarray
    future: np.ndarray
    covariates: np.ndarray
    label: int | None = None
    names: tuple[str, ...] = ()
    aspects: Mapping[str, str] = field(default_factory=dict)

    @property
    def context_frame(self) -> MetricFrame:
        l = self.context.shape[1]
        return MetricFrame(self.timestamps[:l], self.context, self.names, self.aspects)


def window_count(L: int, spec: WindowSpec) -> int:
    span = spec.context_len + spec.forecast_len
    return 0 if L < span else (L - span) // spec.stride + 1


def make_windows(frame: MetricFrame, spec: WindowSpec,
                 covariate_config: CovariateConfig = CovariateConfig(),
                 allow_empty: bool = False) -> list[Window]:
    l, s = spec.context_len, spec.forecast_len
    n = window_count(frame.length, spec)
    if n == 0 and not allow_empty:
        raise FrameError(f"series of length {frame.length} is shorter than l+s={l + s}")
    cov = calendar_covariates(frame.timestamps, covariate_config)
    out = []
    for i in range(n):
        a = i * spec.stride
        b = a + l + s
        label = None
        if frame.labels is not None:
            label = int(frame.labels[a:b].any())
        out.append(Window(
            start=a,
            timestamps=frame.timestamps[a:b],
            context=frame.values[:, a:a + l],
            future=frame.values[:, a + l:b],
            covariates=cov[:, a:b],
            label=label,
            names=frame.names,
            aspects=frame.aspects,
        ))
    return out


ANOMALY_TYPES = ("spike", "level_shift", "dropout_to_zero")


@dataclass(frozen=True)
class SynthConfig:
    """Seasonal metrics with injected anomaly spans.

    ``anomaly_region`` restricts where spans may start, as fractions of L.
    """

    m: int = 2
    length: int = 2000
    period: int = 24
    noise: float = 0.1
    amplitude: float = 1.0
    interval: int = 3600
    start: int = 1_700_000_000 - 1_700_000_000 % 86400
    anomaly_types: tuple[str, ...] = ANOMALY_TYPES
    anomaly_ratio: float = 0.05
    span_len: tuple[int, int] = (3, 12)
    magnitude: float = 4.0
    anomaly_region: tuple[float, float] = (0.0, 1.0)
    names: tuple[str, ...] | None = None
    aspects: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.m < 1 or self.length < 2 or self.period < 2 or self.interval < 1:
            raise ValueError("invalid synthetic shape parameters")
        if not 0 <= self.anomaly_ratio < 0.5:
            raise ValueError("anomaly_ratio must be in [0, 0.5)")
        bad = [t for t in self.anomaly_types if t not in ANOMALY_TYPES]
        if bad or not self.anomaly_types:
            raise ValueError(f"unknown anomaly types {bad}")
        lo, hi = self.span_len
        if not 1 <= lo <= hi:
            raise ValueError("span_len must satisfy 1 <= lo <= hi")
        a, b = self.anomaly_region
        if not 0 <= a < b <= 1:
            raise ValueError("anomaly_region must satisfy 0 <= start < end <= 1")
        if self.names is not None and len(self.names) != self.m:
            raise ValueError("names must have m entries")


def synth_generate(config: SynthConfig = SynthConfig(), seed: int = 0) -> MetricFrame:
    rng = np.random.default_rng(seed)
    L, m = config.length, config.m
    idx = np.arange(L)
    phases = rng.uniform(0, 2 * np.pi, size=m) if m > 1 else np.zeros(1)
    levels = 10.0 + 2.0 * np.arange(m)
    values = (levels[:, None]
              + config.amplitude * np.sin(2 * np.pi * idx[None, :] / config.period + phases[:, None])
              + config.noise * rng.standard_normal((m, L)))
    labels = np.zeros(L, dtype=np.int8)

    target = int(round(config.anomaly_ratio * L))
    lo_region = int(config.anomaly_region[0] * L)
    hi_region = int(config.anomaly_region[1] * L)
    placed, attempts = 0, 0
    while placed < target and attempts < 1000:
        attempts += 1
        length = min(int(rng.integers(config.span_len[0], config.span_len[1] + 1)), target - placed)
        if hi_region - lo_region < length:
            break
        a = int(rng.integers(lo_region, hi_region - length + 1))
        b = a + length
        # keep spans separated by at least one clean point
        if labels[max(a - 1, 0):min(b + 1, L)].any():
            continue
        kind = config.anomaly_types[int(rng.integers(len(config.anomaly_types)))]
        hit = rng.random(m) < 0.5
        hit[int(rng.integers(m))] = True
        for j in np.flatnonzero(hit):
            scale = config.magnitude * config.amplitude
            if kind == "spike":
                values[j, a:b] += scale * rng.choice([-1.0, 1.0]) * rng.uniform(1.0, 1.5, size=length)
            elif kind == "level_shift":
                values[j, a:b] += scale * rng.choice([-1.0, 1.0])
            else:
                values[j, a:b] = 0.0
        labels[a:b] = 1
        placed += length

    names = config.names or tuple(f"metric_{j}" for j in range(m))
    ts = config.start + config.interval * idx.astype(np.int64)
    return MetricFrame(ts, values, tuple(names), dict(config.aspects), labels)


def concat_frames(frames: Sequence[MetricFrame]) -> MetricFrame:
    first = frames[0]
    labels = None
    if all(f.labels is not None for f in frames):
        labels = np.concatenate([f.labels for f in frames])
    return MetricFrame(
        np.concatenate([f.timestamps for f in frames]),
        np.concatenate([f.values for f in frames], axis=1),
        first.names, first.aspects, labels)
