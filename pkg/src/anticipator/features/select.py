"""Feature selection: boosted-tree importance when labels exist, correlation pruning otherwise."""

from __future__ import annotations

import os
from typing import Sequence

import numpy as np

from .stats import pearson


def redundancy_mask(rows: np.ndarray, names: Sequence[str], threshold: float = 0.95) -> tuple[str, ...]:
    """Greedy pruning in catalog order: a feature is dropped when |r| with an
    already-kept feature exceeds ``threshold``."""
    rows = np.asarray(rows, dtype=np.float64)
    kept: list[int] = []
    for j in range(rows.shape[1]):
        if all(abs(pearson(rows[:, i], rows[:, j])) <= threshold for i in kept):
            kept.append(j)
    return tuple(names[j] for j in kept)


def importance_scores(rows: np.ndarray, labels: np.ndarray, seed: int = 0) -> np.ndarray:
    from sklearn.ensemble import GradientBoostingRegressor

    model = GradientBoostingRegressor(loss="squared_error", max_depth=3, n_estimators=50,
                                      random_state=seed)
    model.fit(rows, np.asarray(labels, dtype=np.float64))
    return model.feature_importances_


def importance_mask(rows: np.ndarray, names: Sequence[str], labels, coverage: float = 0.95,
                    top_k: int | None = None, seed: int = 0) -> tuple[str, ...]:
    """Keep the highest-importance features covering ``coverage`` of total
    importance (or exactly ``top_k`` of them). The mask preserves catalog order."""
    imp = importance_scores(rows, labels, seed)
    order = np.argsort(-imp, kind="stable")
    if top_k is not None:
        chosen = order[:max(1, top_k)]
    elif imp.sum() <= 0:
        chosen = order[:1]
    else:
        cum = np.cumsum(imp[order]) / imp.sum()
        chosen = order[:int(np.searchsorted(cum, coverage - 1e-12)) + 1]
    keep = set(int(i) for i in chosen)
    return tuple(n for j, n in enumerate(names) if j in keep)


def select_features(rows, names: Sequence[str], labels=None, method: str = "redundancy",
                    threshold: float = 0.95, coverage: float = 0.95, top_k: int | None = None,
                    seed: int = 0) -> tuple[str, ...]:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise ValueError("feature selection needs at least two rows")
    if rows.shape[1] != len(names):
        raise ValueError("rows and names disagree on feature count")
    if method == "importance":
        if labels is None:
            raise ValueError("importance selection requires labels")
        mask = importance_mask(rows, names, labels, coverage, top_k, seed)
    elif method == "redundancy":
        mask = redundancy_mask(rows, names, threshold)
    else:
        raise ValueError(f"unknown selection method {method!r}")
    if not mask:
        raise ValueError("feature selection produced an empty mask")
    return mask


def save_mask(mask: Sequence[str], path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.write("".join(f"{n}\n" for n in mask))


def load_mask(path: str | os.PathLike) -> tuple[str, ...]:
    with open(path) as fh:
        mask = tuple(line.strip() for line in fh if line.strip())
    if not mask:
        raise ValueError(f"empty feature mask file: {path}")
    return mask
