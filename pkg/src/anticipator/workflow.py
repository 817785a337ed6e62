"""Run orchestration: the phases behind each command, usable without the CLI."""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass

import numpy as np

from . import iforest
from .config import RunConfig
from .features import FeatureConfig, feature_matrix, select_features
from .forecaster import (EpochRecord, ForecastConfig, ForecasterModel, TrainConfig,
                         create_model, forecast_batch, train)
from .pipeline import AnticipationResult, anticipate_batch, concat_frame, observed_frame
from .series import (CovariateConfig, FrameError, FrameSchema, MetricFrame, SplitSpec, SynthConfig,
                     WindowSpec, fit_scaler, load_frame, make_windows, parse_dates,
                     split_chronological)

log = logging.getLogger(__name__)


def window_spec(config: RunConfig, stride: int | None = None) -> WindowSpec:
    w = config.window
    return WindowSpec(w.context_len, w.forecast_len, stride or w.stride)


def split_spec(config: RunConfig) -> SplitSpec:
    return SplitSpec(config.split.train, config.split.val, config.split.test)


def special_dates(config: RunConfig):
    path = config.paths.special_dates
    if not path:
        return ()
    if not os.path.exists(path):
        raise FileNotFoundError(f"special-dates file not found: {path}")
    with open(path) as fh:
        return parse_dates(line.strip() for line in fh if line.strip())


def covariate_config(config: RunConfig) -> CovariateConfig:
    return CovariateConfig(special_dates(config))


def feature_config(config: RunConfig) -> FeatureConfig:
    f = config.features
    lags = tuple(int(x) for x in f.c3_lags.split(",") if x.strip())
    return FeatureConfig(f.acf_lags, f.fourier_k, lags, f.tlcc_max_lag, f.mi_bins, f.rolling_sub_len,
                         special_dates(config), f.z_threshold, f.io_aspect)


def frame_schema(config: RunConfig) -> FrameSchema:
    aspects = {}
    for item in config.features.aspects.split(","):
        if item.strip():
            name, _, aspect = item.partition(":")
            aspects[name.strip()] = aspect.strip()
    return FrameSchema(aspects=aspects)


def synth_config(config: RunConfig) -> SynthConfig:
    s = config.synth
    types = tuple(t.strip() for t in s.anomaly_types.split(",") if t.strip())
    return SynthConfig(m=s.m, length=s.length, period=s.period, noise=s.noise, amplitude=s.amplitude,
                       interval=s.interval, anomaly_types=types, anomaly_ratio=s.anomaly_ratio,
                       span_len=(s.span_min, s.span_max), magnitude=s.magnitude,
                       anomaly_region=(s.region_start, s.region_end))


def read_frame(config: RunConfig, path: str | None = None) -> MetricFrame:
    return load_frame(path or config.paths.data, frame_schema(config))


def train_config(config: RunConfig) -> TrainConfig:
    d = config.diffusion
    return TrainConfig(d.learning_rate, d.batch_size, d.epochs, d.batches_per_epoch, d.patience)


def forecast_config(config: RunConfig, detector: bool = False) -> ForecastConfig:
    d = config.diffusion
    n = d.detector_num_samples if detector else d.num_samples
    return ForecastConfig(n, d.aggregation, config.seed)


def _windows(frame: MetricFrame, config: RunConfig, stride: int | None = None, allow_empty=False):
    return make_windows(frame, window_spec(config, stride), covariate_config(config), allow_empty=allow_empty)


# --- train -----------------------------------------------------------------

def train_forecaster(frame: MetricFrame, config: RunConfig) -> tuple[ForecasterModel, list[EpochRecord]]:
    tr, va, _ = split_chronological(frame, split_spec(config))
    train_w = _windows(tr, config)
    val_w = _windows(va, config, allow_empty=True)
    d = config.diffusion
    model = create_model(frame.m, window_spec(config), fit_scaler(tr), seed=config.seed, T=d.steps,
                         beta_start=d.beta_start, beta_end=d.beta_end,
                         literal_variance=d.literal_variance, train_config=train_config(config),
                         cov_dim=covariate_config(config).dim, hidden=d.hidden_size,
                         rnn_layers=d.rnn_layers, res_layers=d.residual_layers,
                         res_channels=d.residual_channels, kernel_size=d.kernel_size,
                         dilation_cycle=d.dilation_cycle, step_dim=d.step_embed_dim)
    return train(model, train_w, seed=config.seed, val_windows=val_w or None)


def loss_trace_text(trace: list[EpochRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "val_loss"])
    for r in trace:
        w.writerow([r.epoch, repr(r.train_loss), "" if r.val_loss is None else repr(r.val_loss)])
    return buf.getvalue()


# --- fit-detector ----------------------------------------------------------

def _feature_rows(frames, fcfg: FeatureConfig, jobs: int = 1):
    names, rows = feature_matrix(frames, fcfg, jobs)
    return rows, list(names)


def _check_compatible(frame: MetricFrame, model: ForecasterModel, config: RunConfig):
    if frame.m != model.net.m:
        raise FrameError(f"data has {frame.m} metrics but the checkpoint expects {model.net.m}")
    w = model.window
    if (w.context_len, w.forecast_len) != (config.window.context_len, config.window.forecast_len):
        raise ValueError("window lengths in the config do not match the checkpoint")


@dataclass(frozen=True)
class DetectorFit:
    forest: iforest.IsolationForest
    mask: tuple[str, ...]
    n_rows: int


def fit_detector(frame: MetricFrame, model: ForecasterModel, config: RunConfig) -> DetectorFit:
    """Phase 1 on observed training windows, then Algorithm-1 growth on concatenations."""
    _check_compatible(frame, model, config)
    fcfg = feature_config(config)
    tr, va, _ = split_chronological(frame, split_spec(config))
    train_w = _windows(tr.without_labels(), config, stride=config.window.detector_stride)
    if len(train_w) < 2:
        raise ValueError("fit-detector needs at least two training windows")

    obs_rows, names = _feature_rows([observed_frame(w) for w in train_w], fcfg, config.jobs)
    sel = config.selection
    if sel.method == "importance":
        val_w = _windows(va, config, stride=config.window.detector_stride, allow_empty=True)
        if va.labels is None or len(val_w) < 2:
            raise ValueError("importance selection needs at least two labelled validation windows")
        val_rows, _ = _feature_rows([observed_frame(w) for w in val_w], fcfg, config.jobs)
        mask = select_features(val_rows, names, [w.label for w in val_w], "importance",
                               coverage=sel.coverage, seed=config.seed)
    else:
        mask = select_features(obs_rows, names, method="redundancy", threshold=sel.threshold)
    cols = [names.index(n) for n in mask]

    fo = config.forest
    psi = min(fo.psi, len(train_w))
    pre = iforest.fit(obs_rows[:, cols], psi=psi, gamma=fo.gamma, seed=config.seed,
                      threshold=fo.isolation_threshold, feature_names=mask)

    points, _ = forecast_batch(np.stack([w.context for w in train_w]),
                               np.stack([w.covariates for w in train_w]), model,
                               forecast_config(config, detector=True))
    cat_rows, _ = _feature_rows([concat_frame(w, points[i]) for i, w in enumerate(train_w)], fcfg, config.jobs)
    forest = iforest.incremental_fit(pre, cat_rows[:, cols], psi=psi, gamma=fo.gamma,
                                     seed=config.seed + 1, keep=fo.incremental_keep)
    return DetectorFit(forest, tuple(mask), len(train_w))


# --- anticipate / evaluate -------------------------------------------------

def test_windows(frame: MetricFrame, config: RunConfig):
    _, _, te = split_chronological(frame, split_spec(config))
    return _windows(te, config, allow_empty=True)


def run_anticipation(frame: MetricFrame, model: ForecasterModel, forest: iforest.IsolationForest,
                     mask, config: RunConfig, timing: bool = True) -> list[AnticipationResult]:
    """Score every test window. Labels are stripped before anything is computed."""
    _check_compatible(frame, model, config)
    windows = test_windows(frame.without_labels(), config)
    return anticipate_batch(windows, model, feature_config(config), mask, forest,
                            threshold=config.forest.threshold,
                            forecast_config=forecast_config(config), timing=timing)


RESULT_HEAD = ("id", "start_ts", "score", "flag", "forecast_seconds", "featurize_seconds", "detect_seconds")


def results_text(results: list[AnticipationResult], names, s: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(RESULT_HEAD) + [f"{n}@{k + 1}" for n in names for k in range(s)])
    for r in results:
        d = r.durations
        w.writerow([r.window_id, r.start_ts, repr(r.score), r.flag, repr(d["forecast"]),
                    repr(d["featurize"]), repr(d["detect"])] + [repr(float(v)) for v in r.forecast.ravel()])
    return buf.getvalue()


def read_results(path: str, m: int, s: int) -> list[AnticipationResult]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"results file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0][:len(RESULT_HEAD)]) != RESULT_HEAD:
        raise ValueError(f"{path} is not an anticipation results file")
    if len(rows[0]) != len(RESULT_HEAD) + m * s:
        raise ValueError(f"{path} holds forecasts of a different shape than the config")
    out = []
    n0 = len(RESULT_HEAD)
    for row in rows[1:]:
        fc = np.array([float(v) for v in row[n0:]]).reshape(m, s)
        out.append(AnticipationResult(int(row[0]), int(row[1]), float(row[2]), int(row[3]), fc,
                                      durations={"forecast": float(row[4]), "featurize": float(row[5]),
                                                 "detect": float(row[6])}))
    return out


def attach_truth(results: list[AnticipationResult], frame: MetricFrame, config: RunConfig):
    """Pair each result with its test window's label and observed future, by id and start."""
    if frame.labels is None:
        raise ValueError("evaluation needs a label column in the data file")
    windows = test_windows(frame, config)
    if len(windows) != len(results):
        raise ValueError(f"results hold {len(results)} windows but the data yields {len(windows)}")
    out = []
    for r in results:
        if not 0 <= r.window_id < len(windows) or int(windows[r.window_id].timestamps[0]) != r.start_ts:
            raise ValueError(f"result id {r.window_id} does not align with the test windows")
        w = windows[r.window_id]
        out.append(AnticipationResult(r.window_id, r.start_ts, r.score, r.flag, r.forecast,
                                      w.label, w.future, r.durations))
    return out
