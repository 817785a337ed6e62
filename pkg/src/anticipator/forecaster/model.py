"""Conditional diffusion forecaster: training, ancestral sampling, multi-step forecasts."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .. import autograd as ag
from ..series import Scaler, Window, WindowSpec
from .nets import NetConfig, encode_sequence, encode_step, eps_net, init_params, zero_states
from .schedule import NoiseSchedule, build_schedule, denoise_step, noise_batch, reverse_sigma

log = logging.getLogger(__name__)

AGGREGATIONS = ("mean", "max", "min")


class TrainingDiverged(RuntimeError):
    pass


class UntrainedModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    batch_size: int = 256
    epochs: int = 50
    batches_per_epoch: int = 100
    patience: int = 5
    grad_clip: float = 10.0


@dataclass(frozen=True)
class ForecastConfig:
    num_samples: int = 16
    aggregation: str = "mean"
    seed: int = 0

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")


@dataclass
class ForecasterModel:
    net: NetConfig
    window: WindowSpec
    scaler: Scaler
    params: dict[str, np.ndarray]
    T: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.1
    literal_variance: bool = False
    train_config: TrainConfig = field(default_factory=TrainConfig)
    trained: bool = False

    @property
    def schedule(self) -> NoiseSchedule:
        return build_schedule(self.T, self.beta_start, self.beta_end)


def create_model(m: int, window: WindowSpec, scaler: Scaler, *, seed: int = 0, T: int = 100,
                 beta_start: float = 1e-4, beta_end: float = 0.1, literal_variance: bool = False,
                 train_config: TrainConfig | None = None, **net_kwargs) -> ForecasterModel:
    net = NetConfig(m=m, **net_kwargs)
    build_schedule(T, beta_start, beta_end)
    params = init_params(net, np.random.default_rng(seed))
    return ForecasterModel(net, window, scaler, params, T, beta_start, beta_end, literal_variance,
                           train_config or TrainConfig())


def condition_encode(x_prev, cov_next, states, model: ForecasterModel):
    """Feed one observation and the next step's covariates through the encoder.

    ``states`` is the per-layer hidden state list (each (B, H) or (H,)).
    Returns the updated list; its last entry is the conditioning vector.
    """
    cfg = model.net
    x_prev = np.asarray(x_prev, dtype=np.float64)
    cov_next = np.asarray(cov_next, dtype=np.float64)
    single = x_prev.ndim == 1
    if x_prev.shape[-1] != cfg.m or cov_next.shape[-1] != cfg.cov_dim:
        raise ValueError(f"expected {cfg.m} metrics and {cfg.cov_dim} covariates")
    states = [np.atleast_2d(np.asarray(s, dtype=np.float64)) for s in states]
    if any(s.shape[-1] != cfg.hidden for s in states) or len(states) != cfg.rnn_layers:
        raise ValueError(f"expected {cfg.rnn_layers} states of size {cfg.hidden}")
    with ag.no_grad():
        new = encode_step(np.atleast_2d(x_prev), np.atleast_2d(cov_next), states, model.params, cfg)
    out = [s.data for s in new]
    return [s[0] for s in out] if single else out


def eps_predict(x_t, t, h, model: ForecasterModel) -> np.ndarray:
    cfg = model.net
    x_t = np.asarray(x_t, dtype=np.float64)
    single = x_t.ndim == 1
    x2 = np.atleast_2d(x_t)
    h2 = np.atleast_2d(np.asarray(h, dtype=np.float64))
    if x2.shape[1] != cfg.m or h2.shape[1] != cfg.hidden:
        raise ValueError("dimension mismatch for noise prediction")
    tt = np.broadcast_to(np.asarray(t, dtype=np.int64), (x2.shape[0],))
    with ag.no_grad():
        out = eps_net(x2, tt, h2, model.params, cfg).data
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite noise prediction")
    return out[0] if single else out


def reverse_step(x_t, t: int, h, model: ForecasterModel, rng: np.random.Generator) -> np.ndarray:
    sched = model.schedule
    sched.check_step(t)
    eps_hat = eps_predict(x_t, t, h, model)
    noise = rng.standard_normal(np.shape(x_t)) if t > 1 else None
    return denoise_step(x_t, t, eps_hat, sched, noise, model.literal_variance)


def _scaled_batch(model: ForecasterModel, windows: Sequence[Window]):
    """Stack windows into scaled (B, l+s, m) values and (B, l+s, d_c) covariates."""
    vals = np.stack([np.concatenate([w.context, w.future], axis=1) for w in windows])
    vals = model.scaler.apply(vals)
    covs = np.stack([w.covariates for w in windows])
    return vals.transpose(0, 2, 1), covs.transpose(0, 2, 1)


def conditioned_loss(params, model: ForecasterModel, xs: np.ndarray, covs: np.ndarray,
                     t: np.ndarray, eps: np.ndarray,
                     predictor: Callable | None = None):
    """Smooth-L1 noise-prediction loss over the last s+1 positions of each window.

    xs: scaled values (B, l+s, m); covs: (B, l+s, d_c); t: (B, s+1) integer steps;
    eps: (B, s+1, m) standard normal draws. Target position tau (1-based, l..l+s)
    is conditioned on the encoder state after inputs x^1..x^{tau-1}, each paired
    with the covariates of the following step.
    """
    cfg = model.net
    B, n, m = xs.shape
    s = model.window.forecast_len
    l = n - s
    states = zero_states(B, cfg)
    tops, _ = encode_sequence(xs[:, :n - 1], covs[:, 1:n], states, params, cfg)
    # tops[k] has consumed x^1..x^{k+1}; WindowSpec guarantees l >= 2
    cond = ag.reshape(ag.stack(tops[l - 2:n - 1], axis=1), (B * (s + 1), cfg.hidden))
    x0 = xs[:, l - 1:n].reshape(B * (s + 1), m)
    tt = t.reshape(-1)
    ee = eps.reshape(B * (s + 1), m)
    x_t = noise_batch(x0, tt, ee, model.schedule)
    if predictor is not None:
        pred = predictor(x_t, tt, cond, ee)
    else:
        pred = eps_net(x_t, tt, cond, params, cfg)
    return ag.smooth_l1(ee, pred)


def _draw(rng, model: ForecasterModel, B: int):
    s, m = model.window.forecast_len, model.net.m
    t = rng.integers(1, model.T + 1, size=(B, s + 1))
    eps = rng.standard_normal((B, s + 1, m))
    return t, eps


def loss_and_grads(model: ForecasterModel, xs, covs, t, eps):
    leaves = {k: ag.Tensor(v, requires_grad=True) for k, v in model.params.items()}
    loss = conditioned_loss(leaves, model, xs, covs, t, eps)
    loss.backward()
    grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.data)) for k, v in leaves.items()}
    return float(loss.data), grads


class Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.k = 0

    def step(self, params, grads):
        self.k += 1
        c1 = 1 - self.b1 ** self.k
        c2 = 1 - self.b2 ** self.k
        for name in sorted(params):
            g = grads[name]
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g * g
            params[name] = params[name] - self.lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)


def _clip(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm and total > max_norm:
        k = max_norm / total
        return {n: g * k for n, g in grads.items()}
    return grads


def _round32(params):
    return {k: v.astype(np.float32).astype(np.float64) for k, v in params.items()}


def validation_loss(model: ForecasterModel, windows: Sequence[Window], seed: int) -> float:
    rng = np.random.default_rng(seed)
    total, count = 0.0, 0
    with ag.no_grad():
        for a in range(0, len(windows), 256):
            chunk = windows[a:a + 256]
            xs, covs = _scaled_batch(model, chunk)
            t, eps = _draw(rng, model, len(chunk))
            total += float(conditioned_loss(model.params, model, xs, covs, t, eps).data) * len(chunk)
            count += len(chunk)
    return total / count


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None


def train(model: ForecasterModel, windows: Sequence[Window], seed: int = 0,
          val_windows: Sequence[Window] | None = None,
          config: TrainConfig | None = None) -> tuple[ForecasterModel, list[EpochRecord]]:
    """Fit the encoder and noise predictor; returns a new model and the loss trace.

    With validation windows, training stops after ``patience`` epochs without
    improvement and the best-scoring parameters are kept.
    """
    if not windows:
        raise ValueError("no training windows")
    cfg = config or model.train_config
    rng = np.random.default_rng(seed)
    params = {k: v.copy() for k, v in model.params.items()}
    work = replace(model, params=params, train_config=cfg)
    opt = Adam(params, cfg.learning_rate)
    xs_all, covs_all = _scaled_batch(model, windows)
    n = len(windows)
    trace: list[EpochRecord] = []
    best, best_params, stale = np.inf, None, 0

    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for _ in range(cfg.batches_per_epoch):
            idx = rng.choice(n, size=cfg.batch_size, replace=n < cfg.batch_size)
            t, eps = _draw(rng, model, idx.size)
            loss, grads = loss_and_grads(work, xs_all[idx], covs_all[idx], t, eps)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            opt.step(params, _clip(grads, cfg.grad_clip))
            work.params = params
            losses.append(loss)
        val = None
        if val_windows:
            val = validation_loss(work, val_windows, seed + 1)
            if not np.isfinite(val):
                raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        trace.append(EpochRecord(epoch, float(np.mean(losses)), val))
        log.info("epoch %d train %.5f val %s", epoch, trace[-1].train_loss, val)
        if val is not None:
            if val < best:
                best, best_params, stale = val, {k: v.copy() for k, v in params.items()}, 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break

    final = best_params if best_params is not None else params
    return replace(model, params=_round32(final), train_config=cfg, trained=True), trace


def _aggregate(samples: np.ndarray, how: str) -> np.ndarray:
    if how == "mean":
        return samples.mean(axis=0)
    if how == "max":
        return samples.max(axis=0)
    return samples.min(axis=0)


def forecast_batch(contexts: np.ndarray, covariates: np.ndarray, model: ForecasterModel,
                   config: ForecastConfig = ForecastConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Forecast N windows at once.

    contexts: (N, m, l) in original units; covariates: (N, d_c, l+s).
    Returns point forecasts (N, m, s) and samples (num_samples, N, m, s).
    """
    if not model.trained:
        raise UntrainedModelError("forecast requires a trained model")
    cfg = model.net
    l, s = model.window.context_len, model.window.forecast_len
    contexts = np.asarray(contexts, dtype=np.float64)
    covariates = np.asarray(covariates, dtype=np.float64)
    N = contexts.shape[0]
    if contexts.shape[1:] != (cfg.m, l):
        raise ValueError(f"context must be {cfg.m} x {l}, got {contexts.shape[1:]}")
    if covariates.shape[1:] != (cfg.cov_dim, l + s):
        raise ValueError(f"covariates must be {cfg.cov_dim} x {l + s}")
    S = config.num_samples
    rng = np.random.default_rng(config.seed)
    sched = model.schedule
    p = model.params

    ctx = model.scaler.apply(contexts).transpose(0, 2, 1)        # (N, l, m)
    cov = covariates.transpose(0, 2, 1)                          # (N, l+s, d_c)
    ctx = np.repeat(ctx[None], S, axis=0).reshape(S * N, l, cfg.m)
    cov = np.repeat(cov[None], S, axis=0).reshape(S * N, l + s, cfg.cov_dim)
    B = S * N

    out = np.empty((B, s, cfg.m))
    with ag.no_grad():
        _, states = encode_sequence(ctx, cov[:, 1:l + 1], zero_states(B, cfg), p, cfg)
        for k in range(s):
            h = states[-1].data
            x = rng.standard_normal((B, cfg.m))
            for t in range(model.T, 0, -1):
                eps_hat = eps_net(x, np.full(B, t), h, p, cfg).data
                noise = rng.standard_normal((B, cfg.m)) if t > 1 else None
                x = denoise_step(x, t, eps_hat, sched, noise, model.literal_variance)
            out[:, k] = x
            if k + 1 < s:
                states = [st.data for st in encode_step(x, cov[:, l + k + 1], [st.data for st in states], p, cfg)]
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite forecast")
    samples = out.reshape(S, N, s, cfg.m).transpose(0, 1, 3, 2)  # (S, N, m, s)
    samples = model.scaler.invert(samples)
    return _aggregate(samples, config.aggregation), samples


def forecast(context: np.ndarray, covariates: np.ndarray, model: ForecasterModel,
             config: ForecastConfig = ForecastConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Forecast s steps for one context (m x l). Returns (m x s point, samples S x m x s)."""
    point, samples = forecast_batch(np.asarray(context)[None], np.asarray(covariates)[None], model, config)
    return point[0], samples[:, 0]


def sigma_schedule(model: ForecasterModel) -> np.ndarray:
    sched = model.schedule
    return np.array([reverse_sigma(sched, t, model.literal_variance) for t in range(1, sched.T + 1)])
