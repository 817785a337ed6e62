"""Anticipating performance-metric anomalies ahead of real time.

A conditional diffusion forecaster predicts the next few points of a
multivariate metric series; anomaly-indicating features of the observed and
forecast values feed an incrementally trained isolation forest.
"""

__version__ = "0.1.0"
