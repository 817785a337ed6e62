"""
Anomaly-indicating features
===========================

The extractor turns one window into a named vector across six categories;
selection then prunes near-duplicate columns.
"""

# %%
from collections import Counter

import numpy as np

from anticipator.features import extract_all, feature_catalog, feature_matrix, select_features
from anticipator.series import SynthConfig, WindowSpec, make_windows, synth_generate

frame = synth_generate(SynthConfig(m=2, length=400, anomaly_ratio=0.0), seed=1).without_labels()
cat = feature_catalog(frame.names)
print(len(cat), "features:", dict(Counter(e.category for e in cat)))

# %%
# features of the first 24 points
vec = extract_all(frame.slice(0, 24))
for name in vec.names[:8]:
    print(f"{name:28s} {vec.as_dict()[name]: .4f}")

# %%
ws = make_windows(frame, WindowSpec(24, 4, stride=2))
names, rows = feature_matrix([frame.slice(x.start, x.start + 24) for x in ws])
mask = select_features(rows, names, threshold=0.95)
print(f"redundancy filter keeps {len(mask)} of {len(names)} columns")
