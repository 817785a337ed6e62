"""Conditional denoising-diffusion forecaster."""

from .checkpoint import load_model, model_bytes, save_model
from .model import (
    Adam,
    EpochRecord,
    ForecastConfig,
    ForecasterModel,
    TrainConfig,
    TrainingDiverged,
    UntrainedModelError,
    condition_encode,
    conditioned_loss,
    create_model,
    eps_predict,
    forecast,
    forecast_batch,
    reverse_step,
    train,
)
from .nets import NetConfig, eps_net, gated_activation, init_params, step_embed
from .schedule import NoiseSchedule, build_schedule, denoise_step, noise_sample, reverse_sigma

__all__ = [
    "Adam", "EpochRecord", "ForecastConfig", "ForecasterModel", "NetConfig", "NoiseSchedule",
    "TrainConfig", "TrainingDiverged", "UntrainedModelError", "build_schedule", "condition_encode",
    "conditioned_loss", "create_model", "denoise_step", "eps_net", "eps_predict", "forecast",
    "forecast_batch", "gated_activation", "init_params", "load_model", "model_bytes",
    "noise_sample", "reverse_sigma", "reverse_step", "save_model", "step_embed", "train",
]
