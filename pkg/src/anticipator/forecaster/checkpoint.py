"""Checkpoint files for trained forecasters (float32 little-endian parameter arrays)."""

from __future__ import annotations

import dataclasses
import os

import numpy as np

from .. import binfmt
from ..series import Scaler, WindowSpec
from .model import ForecasterModel, TrainConfig
from .nets import NetConfig

MAGIC = b"ANTCKPT\x00"
FORMAT_VERSION = 1


def model_bytes(model: ForecasterModel) -> bytes:
    names = sorted(model.params)
    manifest = {
        "format_version": FORMAT_VERSION,
        "m": model.net.m,
        "l": model.window.context_len,
        "s": model.window.forecast_len,
        "stride": model.window.stride,
        "H": model.net.hidden,
        "k": model.net.res_layers,
        "T": model.T,
        "beta_start": model.beta_start,
        "beta_end": model.beta_end,
        "literal_variance": model.literal_variance,
        "cov_dim": model.net.cov_dim,
        "net": dataclasses.asdict(model.net),
        "train": dataclasses.asdict(model.train_config),
        "trained": model.trained,
        "scaler_mean": [float(v) for v in model.scaler.mean],
        "scaler_std": [float(v) for v in model.scaler.std],
        "arrays": [[n, list(model.params[n].shape)] for n in names],
    }
    payload = b"".join(np.ascontiguousarray(model.params[n], dtype="<f4").tobytes() for n in names)
    return binfmt.pack(MAGIC, FORMAT_VERSION, manifest, payload)


def save_model(model: ForecasterModel, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(model_bytes(model))


def load_model(path: str | os.PathLike) -> ForecasterModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    man, payload = binfmt.unpack(blob, MAGIC, FORMAT_VERSION)
    params, off = {}, 0
    for name, shape in man["arrays"]:
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=off)
        params[name] = arr.astype(np.float64).reshape(shape)
        off += 4 * n
    if off != len(payload):
        raise binfmt.ChecksumError("payload length does not match manifest")
    scaler = Scaler(np.asarray(man["scaler_mean"]), np.asarray(man["scaler_std"]))
    return ForecasterModel(
        net=NetConfig(**man["net"]),
        window=WindowSpec(man["l"], man["s"], man["stride"]),
        scaler=scaler,
        params=params,
        T=man["T"],
        beta_start=man["beta_start"],
        beta_end=man["beta_end"],
        literal_variance=man["literal_variance"],
        train_config=TrainConfig(**man["train"]),
        trained=man["trained"],
    )
