"""GRU condition encoder and the dilated gated-convolution noise predictor.

Parameters live in a flat ``dict[str, np.ndarray]`` so they can be serialised
and optimised uniformly. The forward functions accept either raw arrays or
:class:`~anticipator.autograd.Tensor` leaves, so the same code path serves
training (with gradients) and sampling (under ``no_grad``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autograd as ag


@dataclass(frozen=True)
class NetConfig:
    m: int
    cov_dim: int = 5
    hidden: int = 64
    rnn_layers: int = 2
    res_layers: int = 8
    res_channels: int = 64
    kernel_size: int = 3
    dilation_cycle: int = 4
    step_dim: int = 32

    def __post_init__(self):
        if self.m < 1 or self.hidden < 1 or self.rnn_layers < 1 or self.res_layers < 1:
            raise ValueError("network sizes must be positive")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd")
        if self.step_dim < 2 or self.step_dim % 2:
            raise ValueError("step_dim must be an even integer >= 2")

    def dilation(self, i: int) -> int:
        return 2 ** (i % self.dilation_cycle)


def step_embed(t, dim: int) -> np.ndarray:
    """Sinusoidal embedding of diffusion step(s) ``t``: interleaved sin/cos pairs."""
    if dim < 2 or dim % 2:
        raise ValueError("embedding dim must be an even integer >= 2")
    t = np.asarray(t, dtype=np.float64)
    freqs = 10000.0 ** (-np.arange(0, dim, 2) / dim)
    ang = t[..., None] * freqs
    out = np.empty(t.shape + (dim,))
    out[..., 0::2] = np.sin(ang)
    out[..., 1::2] = np.cos(ang)
    return out


def gated_activation(x: np.ndarray, w1: np.ndarray, w2: np.ndarray, dilation: int = 1) -> np.ndarray:
    """tanh(w1 * x) . sigmoid(w2 * x) for x of shape (L, C) and conv weights (Cout, C, K)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("x must be a (length, channels) matrix")
    w1, w2 = np.asarray(w1, dtype=np.float64), np.asarray(w2, dtype=np.float64)
    if w1.shape != w2.shape:
        raise ValueError("w1 and w2 must share a shape")
    zero = np.zeros(w1.shape[0])
    with ag.no_grad():
        f = ag.conv1d(x[None], w1, zero, dilation).data[0]
        g = ag.conv1d(x[None], w2, zero, dilation).data[0]
    return np.tanh(f) * (0.5 * (1.0 + np.tanh(0.5 * g)))


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(cfg: NetConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    p: dict[str, np.ndarray] = {}
    H, C, K = cfg.hidden, cfg.res_channels, cfg.kernel_size
    for layer in range(cfg.rnn_layers):
        din = cfg.m + cfg.cov_dim if layer == 0 else H
        p[f"gru{layer}.w_ih"] = _uniform(rng, (din, 3 * H), H)
        p[f"gru{layer}.w_hh"] = _uniform(rng, (H, 3 * H), H)
        p[f"gru{layer}.b_ih"] = _uniform(rng, (3 * H,), H)
        p[f"gru{layer}.b_hh"] = _uniform(rng, (3 * H,), H)
    p["step.w1"] = _uniform(rng, (cfg.step_dim, C), cfg.step_dim)
    p["step.b1"] = _uniform(rng, (C,), cfg.step_dim)
    p["step.w2"] = _uniform(rng, (C, C), C)
    p["step.b2"] = _uniform(rng, (C,), C)
    p["cond.w"] = _uniform(rng, (H, cfg.m), H)
    p["cond.b"] = _uniform(rng, (cfg.m,), H)
    p["in.w"] = _uniform(rng, (1, C), 1)
    p["in.b"] = _uniform(rng, (C,), 1)
    for i in range(cfg.res_layers):
        p[f"res{i}.step.w"] = _uniform(rng, (C, C), C)
        p[f"res{i}.step.b"] = _uniform(rng, (C,), C)
        p[f"res{i}.dil.w"] = _uniform(rng, (2 * C, C, K), C * K)
        p[f"res{i}.dil.b"] = _uniform(rng, (2 * C,), C * K)
        p[f"res{i}.cond.w"] = _uniform(rng, (1, 2 * C), 1)
        p[f"res{i}.cond.b"] = _uniform(rng, (2 * C,), 1)
        p[f"res{i}.out.w"] = _uniform(rng, (C, 2 * C), C)
        p[f"res{i}.out.b"] = _uniform(rng, (2 * C,), C)
    p["skip.w"] = _uniform(rng, (C, C), C)
    p["skip.b"] = _uniform(rng, (C,), C)
    # zero-initialised output head: the untrained net predicts no noise
    p["out.w"] = np.zeros((C, 1))
    p["out.b"] = np.zeros(1)
    return p


def gru_cell(x, h, p, layer: int):
    """One GRU update. ``x`` (B, din), ``h`` (B, H); gate order r, z, n."""
    H = p[f"gru{layer}.w_hh"].shape[0]
    gx = ag.matmul(x, p[f"gru{layer}.w_ih"]) + p[f"gru{layer}.b_ih"]
    gh = ag.matmul(h, p[f"gru{layer}.w_hh"]) + p[f"gru{layer}.b_hh"]
    r = ag.sigmoid(gx[:, :H] + gh[:, :H])
    z = ag.sigmoid(gx[:, H:2 * H] + gh[:, H:2 * H])
    n = ag.tanh(gx[:, 2 * H:] + r * gh[:, 2 * H:])
    return n + z * (h - n)


def encode_step(x_prev, cov_next, states, p, cfg: NetConfig):
    """Advance every GRU layer by one step; returns the new per-layer states.

    The top layer's state is the conditioning vector for the next target.
    """
    inp = ag.concat([x_prev, cov_next], axis=-1)
    new = []
    for layer in range(cfg.rnn_layers):
        h = gru_cell(inp, states[layer], p, layer)
        new.append(h)
        inp = h
    return new


def encode_sequence(xs, covs, states, p, cfg: NetConfig):
    """Run the encoder over inputs xs (B, n, m) with covariates covs (B, n, d_c).

    Returns (top-layer states for each step as a list, final per-layer states).
    The first layer's input projection is applied to the whole sequence at once.
    """
    n = xs.shape[1]
    H = cfg.hidden
    inp = ag.concat([xs, covs], axis=-1)
    gx_all = ag.matmul(inp, p["gru0.w_ih"]) + p["gru0.b_ih"]
    tops = []
    for k in range(n):
        gx = gx_all[:, k, :]
        h0 = states[0]
        gh = ag.matmul(h0, p["gru0.w_hh"]) + p["gru0.b_hh"]
        r = ag.sigmoid(gx[:, :H] + gh[:, :H])
        z = ag.sigmoid(gx[:, H:2 * H] + gh[:, H:2 * H])
        nn_ = ag.tanh(gx[:, 2 * H:] + r * gh[:, 2 * H:])
        h = nn_ + z * (h0 - nn_)
        new = [h]
        for layer in range(1, cfg.rnn_layers):
            h = gru_cell(h, states[layer], p, layer)
            new.append(h)
        states = new
        tops.append(h)
    return tops, states


def zero_states(batch: int, cfg: NetConfig):
    return [np.zeros((batch, cfg.hidden)) for _ in range(cfg.rnn_layers)]


def eps_net(x_t, t, h, p, cfg: NetConfig):
    """Predict the injected noise. x_t (B, m), integer steps t (B,), condition h (B, H).

    The metric axis is treated as the convolution's length axis with a single
    input channel, so dilated kernels mix neighbouring metrics.
    """
    C = cfg.res_channels
    t = np.asarray(t)
    if t.size > 1 and np.all(t == t.flat[0]):
        t = t[:1]  # shared step: embed once and broadcast over the batch
    emb = ag.Tensor(step_embed(t, cfg.step_dim))
    emb = ag.silu(ag.matmul(emb, p["step.w1"]) + p["step.b1"])
    emb = ag.silu(ag.matmul(emb, p["step.w2"]) + p["step.b2"])

    B, m = x_t.shape
    cond = ag.leaky_relu(ag.matmul(h, p["cond.w"]) + p["cond.b"])
    cond = ag.reshape(cond, (B, m, 1))
    x = ag.reshape(ag.as_tensor(x_t), (B, m, 1))
    x = ag.leaky_relu(ag.matmul(x, p["in.w"]) + p["in.b"])

    skips = None
    for i in range(cfg.res_layers):
        d = ag.matmul(emb, p[f"res{i}.step.w"]) + p[f"res{i}.step.b"]
        y = x + ag.reshape(d, (d.shape[0], 1, C))
        y = ag.conv1d(y, p[f"res{i}.dil.w"], p[f"res{i}.dil.b"], cfg.dilation(i))
        y = y + (ag.matmul(cond, p[f"res{i}.cond.w"]) + p[f"res{i}.cond.b"])
        y = ag.tanh(y[:, :, :C]) * ag.sigmoid(y[:, :, C:])
        y = ag.matmul(y, p[f"res{i}.out.w"]) + p[f"res{i}.out.b"]
        x = (x + y[:, :, :C]) * (1.0 / np.sqrt(2.0))
        skips = y[:, :, C:] if skips is None else skips + y[:, :, C:]

    out = skips * (1.0 / np.sqrt(cfg.res_layers))
    out = ag.relu(ag.matmul(out, p["skip.w"]) + p["skip.b"])
    out = ag.matmul(out, p["out.w"]) + p["out.b"]
    return ag.reshape(out, (B, m))
