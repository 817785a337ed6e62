"""
Training the diffusion forecaster
=================================

A small forecaster on a noisy sinusoid, compared against the naive
persistence baseline that repeats the last observation.
"""

# %%
import numpy as np

from anticipator.config import RunConfig
from anticipator import workflow
from anticipator.forecaster import forecast_batch
from anticipator.pipeline import forecast_metrics, persistence_forecast
from anticipator.series import synth_generate

cfg = RunConfig()
for k, v in {"synth.m": 1, "synth.length": 512, "synth.anomaly_ratio": 0, "diffusion.epochs": 6,
             "diffusion.batches_per_epoch": 15, "diffusion.batch_size": 64,
             "diffusion.learning_rate": 1e-3, "diffusion.num_samples": 8}.items():
    cfg.set(k, str(v))
frame = synth_generate(workflow.synth_config(cfg), seed=0)

# %%
model, trace = workflow.train_forecaster(frame, cfg)
for r in trace:
    print(f"epoch {r.epoch}: train {r.train_loss:.4f}  val {r.val_loss:.4f}")

# %%
ws = workflow.test_windows(frame, cfg)
pts, samples = forecast_batch(np.stack([w.context for w in ws]), np.stack([w.covariates for w in ws]),
                              model, workflow.forecast_config(cfg))
truth = np.stack([w.future for w in ws])
base = np.stack([persistence_forecast(w.context, 4) for w in ws])
print("forecaster MSE  %.4f" % forecast_metrics(pts, truth)[0])
print("persistence MSE %.4f" % forecast_metrics(base, truth)[0])
print("sample spread at the last step: %.3f" % samples[:, :, :, -1].std(axis=0).mean())
