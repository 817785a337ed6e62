"""
Metric frames, splits and windows
=================================

A tour of the data layer: generate a labelled synthetic frame, split it in
time order, standardise with train statistics, and cut it into
context/future windows.
"""

# %%
import numpy as np

from anticipator.series import (
    SplitSpec, SynthConfig, WindowSpec, apply_scaler, fit_scaler, make_windows, split_chronological,
    synth_generate,
)

frame = synth_generate(SynthConfig(m=2, length=480, period=24, anomaly_ratio=0.03), seed=0)
print(frame.names, frame.values.shape, "interval", frame.interval, "s")
print("labelled points:", int(frame.labels.sum()))

# %%
# chronological 60/10/30 split; no shuffling, ever
train, val, test = split_chronological(frame, SplitSpec(0.6, 0.1, 0.3))
print([p.length for p in (train, val, test)])

# scaler statistics come from the training part only
sc = fit_scaler(train)
z = apply_scaler(test, sc)
print("test mean after train scaling:", np.round(z.values.mean(axis=1), 3))

# %%
# a window is l observed points followed by s future points; its label is
# positive when the future block holds an anomaly
ws = make_windows(test, WindowSpec(24, 4, stride=4))
w = ws[0]
print(len(ws), "windows; context", w.context.shape, "future", w.future.shape,
      "covariates", w.covariates.shape)
print("positive windows:", sum(x.label for x in ws))
