"""
Two-phase isolation forest
==========================

Fit on observed rows, then grow a second batch of trees from rows that
mix observation and forecast.
"""

# %%
import numpy as np

from anticipator import iforest

rng = np.random.default_rng(0)
inliers = rng.normal(size=(475, 2))
ang = rng.uniform(0, 2 * np.pi, 25)
outliers = 8 * np.column_stack([np.cos(ang), np.sin(ang)])
X = np.vstack([inliers, outliers])

forest = iforest.fit(X, psi=256, gamma=100, seed=0)
s = iforest.score(forest, X)
print("mean score  inliers %.3f  outliers %.3f" % (s[:475].mean(), s[475:].mean()))
flags, _ = iforest.detect(forest, X, 0.5)
print("flagged outliers %d/25, flagged inliers %d/475" % (flags[475:].sum(), flags[:475].sum()))

# %%
# second phase: rows that look like slightly shifted training data
concat = X + rng.normal(scale=0.2, size=X.shape)
for keep in ("isolated", "normal"):
    both = iforest.incremental_fit(forest, concat, seed=1, keep=keep)
    s2 = iforest.score(both, X)
    print(f"keep={keep:8s} trees={len(both.trees)}  inlier {s2[:475].mean():.3f}  outlier {s2[475:].mean():.3f}")
