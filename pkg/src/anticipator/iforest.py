"""Isolation forest with an incremental second phase over observed+forecast rows."""

from __future__ import annotations

import functools
import math
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import binfmt

EULER_GAMMA = 0.5772156649
MAGIC = b"ANTIFRST"
FORMAT_VERSION = 1


def harmonic(i: int) -> float:
    if i > 10:
        return math.log(i) + EULER_GAMMA
    return sum(1.0 / k for k in range(1, i + 1))


@functools.lru_cache(maxsize=4096)
def average_path(n: int) -> float:
    """Expected unsuccessful-search path length c(n) of a binary search tree on n points."""
    if n <= 1:
        return 0.0
    return 2.0 * harmonic(n - 1) - 2.0 * (n - 1) / n


@functools.lru_cache(maxsize=64)
def _adjust_table(n_max: int) -> np.ndarray:
    return np.array([average_path(n) for n in range(n_max + 1)])


def height_limit(psi: int) -> int:
    return int(math.ceil(math.log2(psi)))


@dataclass(frozen=True)
class IsolationTree:
    """Flat node arrays; ``left[i] == -1`` marks a leaf holding ``size[i]`` samples."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray
    limit: int

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_internal(self) -> int:
        return int(np.count_nonzero(self.left >= 0))

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            internal = self.left[node] >= 0
            if not internal.any():
                return node
            r = rows[internal]
            nd = node[internal]
            go_left = X[r, self.feature[nd]] < self.threshold[nd]
            node[internal] = np.where(go_left, self.left[nd], self.right[nd])


def build_tree(X: np.ndarray, limit: int, rng: np.random.Generator) -> IsolationTree:
    feats, thr, left, right, size, depth = [], [], [], [], [], []

    def new_node(n, d):
        feats.append(-1); thr.append(0.0); left.append(-1); right.append(-1)
        size.append(n); depth.append(d)
        return len(feats) - 1

    stack = [(new_node(X.shape[0], 0), X)]
    while stack:
        idx, S = stack.pop()
        d = depth[idx]
        if S.shape[0] <= 1 or d >= limit:
            continue
        lo, hi = S.min(axis=0), S.max(axis=0)
        varying = np.flatnonzero(hi > lo)
        if varying.size == 0:
            continue
        q = int(varying[rng.integers(varying.size)])
        while True:
            v = float(rng.uniform(lo[q], hi[q]))
            if lo[q] < v <= hi[q]:
                break
        mask = S[:, q] < v
        feats[idx], thr[idx] = q, v
        li = new_node(int(mask.sum()), d + 1)
        ri = new_node(int((~mask).sum()), d + 1)
        left[idx], right[idx] = li, ri
        stack.append((ri, S[~mask]))
        stack.append((li, S[mask]))

    return IsolationTree(
        np.asarray(feats, dtype=np.int32), np.asarray(thr, dtype=np.float64),
        np.asarray(left, dtype=np.int32), np.asarray(right, dtype=np.int32),
        np.asarray(size, dtype=np.int32), np.asarray(depth, dtype=np.int32), limit)


def path_length(tree: IsolationTree, x: np.ndarray) -> np.ndarray | float:
    """Leaf depth plus c(leaf size), for one row or a matrix of rows."""
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    leaves = tree.leaf_index(X)
    sizes = tree.size[leaves]
    adj = _adjust_table(int(sizes.max()))
    out = tree.depth[leaves] + adj[sizes]
    return float(out[0]) if single else out


@dataclass(frozen=True)
class IsolationForest:
    trees: tuple[IsolationTree, ...]
    psi: int
    gamma: int
    n_features: int
    threshold: float = 0.5
    seed: int = 0
    feature_names: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.psi < 2:
            raise ValueError("psi must be >= 2")

    def mean_path(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        if not self.trees:
            raise ValueError("forest has no trees")
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += path_length(t, X)
        return total / len(self.trees)

    def score_samples(self, X) -> np.ndarray:
        return np.power(2.0, -self.mean_path(X) / average_path(self.psi))


def _tree_rngs(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def fit(rows, psi: int = 256, gamma: int = 100, seed: int = 0, threshold: float = 0.5,
        feature_names: Sequence[str] = ()) -> IsolationForest:
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("rows must be a 2-D matrix")
    if psi < 2 or X.shape[0] < psi:
        raise ValueError(f"need at least psi={psi} >= 2 rows, got {X.shape[0]}")
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    limit = height_limit(psi)
    trees = []
    for rng in _tree_rngs(seed, gamma):
        sub = X[rng.choice(X.shape[0], size=psi, replace=False)]
        trees.append(build_tree(sub, limit, rng))
    return IsolationForest(tuple(trees), psi, gamma, X.shape[1], threshold, seed, tuple(feature_names))


def score(forest: IsolationForest, x) -> np.ndarray | float:
    """Anomaly score 2^(-E[path] / c(psi)) in (0, 1); scalar for a single row."""
    s = forest.score_samples(x)
    return float(s[0]) if np.ndim(x) == 1 else s


def incremental_fit(forest_pre: IsolationForest, concat_rows, psi: int | None = None,
                    gamma: int | None = None, seed: int = 1, keep: str = "isolated") -> IsolationForest:
    """Grow ``gamma`` extra trees from ``psi``-subsamples of concatenation rows.

    ``keep="isolated"`` builds each tree on the subsample members that the
    original forest scores at or above its threshold; ``keep="normal"`` uses
    the members below it. An empty selection falls back to the full subsample,
    so the result always has ``len(forest_pre.trees) + gamma`` trees.
    """
    if not forest_pre.trees:
        raise ValueError("incremental_fit needs a fitted forest")
    if keep not in ("isolated", "normal"):
        raise ValueError("keep must be 'isolated' or 'normal'")
    psi = psi or forest_pre.psi
    gamma = gamma or forest_pre.gamma
    X = np.asarray(concat_rows, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != forest_pre.n_features:
        raise ValueError("concatenation rows do not match the forest's feature count")
    if X.shape[0] < psi:
        raise ValueError(f"need at least psi={psi} concatenation rows, got {X.shape[0]}")
    pre_scores = forest_pre.score_samples(X)
    flagged = pre_scores >= forest_pre.threshold
    if keep == "normal":
        flagged = ~flagged
    limit = height_limit(psi)
    new = []
    for rng in _tree_rngs(seed, gamma):
        pick = rng.choice(X.shape[0], size=psi, replace=False)
        chosen = pick[flagged[pick]]
        if chosen.size == 0:
            chosen = pick
        new.append(build_tree(X[chosen], limit, rng))
    return replace(forest_pre, trees=forest_pre.trees + tuple(new))


def detect(forest: IsolationForest, x, threshold: float | None = None):
    """(flag, score): flag is 1 iff score >= threshold (default: the forest's)."""
    thr = forest.threshold if threshold is None else threshold
    s = forest.score_samples(x)
    flags = (s >= thr).astype(np.int8)
    if np.ndim(x) == 1:
        return int(flags[0]), float(s[0])
    return flags, s


_NODE_DTYPES = (("feature", "<i4"), ("threshold", "<f8"), ("left", "<i4"),
                ("right", "<i4"), ("size", "<i4"), ("depth", "<i4"))


def forest_bytes(forest: IsolationForest) -> bytes:
    manifest = {
        "format_version": FORMAT_VERSION,
        "psi": forest.psi,
        "gamma": forest.gamma,
        "threshold": forest.threshold,
        "seed": forest.seed,
        "n_features": forest.n_features,
        "feature_names": list(forest.feature_names),
        "n_trees": len(forest.trees),
        "tree_nodes": [t.n_nodes for t in forest.trees],
        "tree_limits": [t.limit for t in forest.trees],
    }
    parts = []
    for t in forest.trees:
        for name, dtype in _NODE_DTYPES:
            parts.append(np.ascontiguousarray(getattr(t, name), dtype=dtype).tobytes())
    return binfmt.pack(MAGIC, FORMAT_VERSION, manifest, b"".join(parts))


def save_forest(forest: IsolationForest, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(forest_bytes(forest))


def load_forest(path: str | os.PathLike) -> IsolationForest:
    with open(path, "rb") as fh:
        blob = fh.read()
    man, payload = binfmt.unpack(blob, MAGIC, FORMAT_VERSION)
    trees, off = [], 0
    for n, limit in zip(man["tree_nodes"], man["tree_limits"]):
        arrays = {}
        for name, dtype in _NODE_DTYPES:
            width = np.dtype(dtype).itemsize
            arrays[name] = np.frombuffer(payload, dtype=dtype, count=n, offset=off).astype(dtype[1:])
            off += width * n
        trees.append(IsolationTree(limit=limit, **arrays))
    if off != len(payload):
        raise binfmt.ChecksumError("payload length does not match manifest")
    return IsolationForest(tuple(trees), man["psi"], man["gamma"], man["n_features"],
                           man["threshold"], man["seed"], tuple(man["feature_names"]))


def forest_checksum(forest: IsolationForest) -> str:
    return forest_bytes(forest)[-8:].hex()
