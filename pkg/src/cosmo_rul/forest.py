"""Random-forest regression: bagged CART trees with per-split feature draws.

Determinism contract: for a fixed seed, fitting is bit-reproducible and —
with bootstrap off — independent of training-row order.  Both follow from
canonical ordering: each tree stable-sorts its rows by target before
building, split scans order rows by feature value with a stable mergesort,
and split-score ties break toward the lowest feature index, then the lowest
threshold.  Thresholds are midpoints between consecutive distinct values.
Leaf values are the mean target of the leaf's rows, clamped to the leaf's own
min/max so predictions always stay inside the training-target range; the
forest prediction is exactly the arithmetic mean over trees.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

_LEAF = -1
_NO_DEPTH_LIMIT = 2**31 - 1
_SEED_FALLBACK = np.uint64(0x9E3779B97F4A7C15)

FOREST_FORMAT = "cosmo-rul-forest-v1"


@dataclass(frozen=True)
class ForestConfig:
    """Training knobs.  ``max_features_per_split=None`` resolves to ceil(d/3)
    at fit time; ``max_depth=None`` means unlimited."""

    n_trees: int = 100
    max_features_per_split: int | None = None
    min_samples_leaf: int = 5
    max_depth: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.max_features_per_split is not None and self.max_features_per_split < 1:
            raise ValueError("max_features_per_split must be >= 1 when given")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 when given")


@dataclass(frozen=True)
class Tree:
    """Flat node arrays; ``feature[i] == -1`` marks a leaf with ``value[i]``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]


@dataclass(frozen=True)
class Forest:
    trees: tuple[Tree, ...]
    config: ForestConfig
    input_dim: int


@njit(cache=True)
def _rand_u64(state):
    # xorshift64*: deterministic per-tree stream for feature-subset draws
    x = state[0]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    state[0] = x
    return x * np.uint64(0x2545F4914F6CDD1D)


@njit(cache=True)
def _build_tree(X, y, min_leaf, max_features, max_depth, rng_state):
    """Grow one CART regression tree over rows pre-sorted by ascending y.

    Returns (feature, threshold, left, right, value) node arrays.  Node row
    sets keep the ascending-y order through stable partitions, which makes
    every sum (split scans, leaf means) independent of the caller's original
    row order.
    """
    n, d = X.shape
    max_nodes = 2 * n + 1

    feature = np.full(max_nodes, -1, np.int32)
    threshold = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    value = np.zeros(max_nodes, np.float64)

    idx = np.arange(n)
    scratch_l = np.empty(n, np.int64)
    scratch_r = np.empty(n, np.int64)
    perm = np.arange(d)
    feats = np.empty(max_features, np.int64)
    colv = np.empty(n, np.float64)

    stack_node = np.empty(max_nodes, np.int32)
    stack_lo = np.empty(max_nodes, np.int64)
    stack_hi = np.empty(max_nodes, np.int64)
    stack_depth = np.empty(max_nodes, np.int64)
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    stack_depth[0] = 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]
        m = hi - lo
        y_min = y[idx[lo]]
        y_max = y[idx[hi - 1]]

        best_feature = -1
        best_threshold = 0.0
        if m >= 2 * min_leaf and y_min != y_max and depth < max_depth:
            # candidate features: partial Fisher-Yates draw, scanned ascending
            for i in range(max_features):
                r = _rand_u64(rng_state)
                j = i + int(r % np.uint64(d - i))
                tswap = perm[i]
                perm[i] = perm[j]
                perm[j] = tswap
                feats[i] = perm[i]
            for i in range(1, max_features):
                key = feats[i]
                j = i - 1
                while j >= 0 and feats[j] > key:
                    feats[j + 1] = feats[j]
                    j -= 1
                feats[j + 1] = key

            total = 0.0
            for i in range(lo, hi):
                total += y[idx[i]]
            best_prox = total * total / m  # no-split baseline: gains must be positive

            for fi in range(max_features):
                f = feats[fi]
                for i in range(m):
                    colv[i] = X[idx[lo + i], f]
                order = np.argsort(colv[:m], kind="mergesort")
                ls = 0.0
                for i in range(m - 1):
                    ls += y[idx[lo + order[i]]]
                    vi = colv[order[i]]
                    vj = colv[order[i + 1]]
                    if vi == vj:
                        continue
                    nl = i + 1
                    nr = m - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    rs = total - ls
                    prox = ls * ls / nl + rs * rs / nr
                    if prox > best_prox:
                        mid = vi + 0.5 * (vj - vi)
                        if mid >= vj or not np.isfinite(mid):
                            mid = vi  # adjacent floats: keep routing x<=mid consistent
                        best_prox = prox
                        best_feature = f
                        best_threshold = mid

        if best_feature < 0:
            s = 0.0
            for i in range(lo, hi):
                s += y[idx[i]]
            mean = s / m
            if mean < y_min:
                mean = y_min
            elif mean > y_max:
                mean = y_max
            feature[node] = -1
            value[node] = mean
            continue

        # stable partition keeps ascending-y order inside both children
        cl = 0
        cr = 0
        for i in range(lo, hi):
            ii = idx[i]
            if X[ii, best_feature] <= best_threshold:
                scratch_l[cl] = ii
                cl += 1
            else:
                scratch_r[cr] = ii
                cr += 1
        for i in range(cl):
            idx[lo + i] = scratch_l[i]
        for i in range(cr):
            idx[lo + cl + i] = scratch_r[i]

        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feature
        threshold[node] = best_threshold
        left[node] = left_id
        right[node] = right_id
        stack_node[sp] = right_id
        stack_lo[sp] = lo + cl
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = left_id
        stack_lo[sp] = lo
        stack_hi[sp] = lo + cl
        stack_depth[sp] = depth + 1
        sp += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True)
def _predict_tree(feature, threshold, left, right, value, X, out):
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]


def _validate_matrix(features: np.ndarray, name: str = "features") -> np.ndarray:
    X = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty 2-D matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError(f"{name} must be finite")
    return X


def fit(features: np.ndarray, targets: np.ndarray, config: ForestConfig | None = None) -> Forest:
    """Train a forest; deterministic for a fixed config.seed."""
    config = config or ForestConfig()
    X = _validate_matrix(features)
    y = np.ascontiguousarray(np.asarray(targets, dtype=np.float64))
    n, d = X.shape
    if y.shape != (n,):
        raise ValueError(f"targets must have shape ({n},), got {y.shape}")
    if not np.isfinite(y).all():
        raise ValueError("targets must be finite")
    if n < 2:
        raise ValueError(f"need at least 2 training rows, got {n}")

    max_features = config.max_features_per_split
    if max_features is None:
        max_features = -(-d // 3)  # ceil(d / 3)
    if not 1 <= max_features <= d:
        raise ValueError(f"max_features_per_split must be in [1, {d}], got {max_features}")
    resolved = replace(config, max_features_per_split=max_features)
    max_depth = config.max_depth if config.max_depth is not None else _NO_DEPTH_LIMIT

    states = np.random.SeedSequence(config.seed).generate_state(2 * config.n_trees, np.uint64)
    trees = []
    for i in range(config.n_trees):
        if config.bootstrap:
            rng = np.random.default_rng(int(states[2 * i]))
            rows = rng.integers(0, n, size=n)
        else:
            rows = np.arange(n)
        yb = y[rows]
        order = np.argsort(yb, kind="stable")
        Xb = np.ascontiguousarray(X[rows][order])
        yb = np.ascontiguousarray(yb[order])
        split_seed = states[2 * i + 1] if states[2 * i + 1] != 0 else _SEED_FALLBACK
        rng_state = np.array([split_seed], dtype=np.uint64)
        nodes = _build_tree(
            Xb, yb, config.min_samples_leaf, max_features, max_depth, rng_state
        )
        trees.append(Tree(*nodes))
    return Forest(trees=tuple(trees), config=resolved, input_dim=d)


def predict_per_tree(forest: Forest, features: np.ndarray) -> np.ndarray:
    """(n_trees, n_rows) matrix of individual tree predictions."""
    X = _validate_matrix(features)
    if X.shape[1] != forest.input_dim:
        raise ValueError(
            f"feature dimension {X.shape[1]} does not match forest input_dim {forest.input_dim}"
        )
    out = np.empty((len(forest.trees), X.shape[0]), dtype=np.float64)
    for i, tree in enumerate(forest.trees):
        _predict_tree(tree.feature, tree.threshold, tree.left, tree.right, tree.value, X, out[i])
    return out


def predict(forest: Forest, features: np.ndarray) -> np.ndarray:
    """Row-wise mean of the per-tree predictions (exactly)."""
    return np.mean(predict_per_tree(forest, features), axis=0)


def save_forest(forest: Forest, path: str | os.PathLike) -> None:
    """Self-describing .npz with flattened node arrays; reloads bit-exactly."""
    offsets = np.zeros(len(forest.trees) + 1, dtype=np.int64)
    for i, tree in enumerate(forest.trees):
        offsets[i + 1] = offsets[i] + tree.n_nodes
    cfg = forest.config
    np.savez(
        path,
        format=np.array(FOREST_FORMAT),
        input_dim=np.int64(forest.input_dim),
        n_trees=np.int64(cfg.n_trees),
        max_features_per_split=np.int64(cfg.max_features_per_split),
        min_samples_leaf=np.int64(cfg.min_samples_leaf),
        max_depth=np.int64(-1 if cfg.max_depth is None else cfg.max_depth),
        bootstrap=np.int64(1 if cfg.bootstrap else 0),
        seed=np.int64(cfg.seed),
        tree_offsets=offsets,
        node_feature=np.concatenate([t.feature for t in forest.trees]),
        node_threshold=np.concatenate([t.threshold for t in forest.trees]),
        node_left=np.concatenate([t.left for t in forest.trees]),
        node_right=np.concatenate([t.right for t in forest.trees]),
        node_value=np.concatenate([t.value for t in forest.trees]),
    )


def load_forest(path: str | os.PathLike) -> Forest:
    with np.load(path, allow_pickle=False) as archive:
        if str(archive["format"]) != FOREST_FORMAT:
            raise ValueError(f"unrecognized forest format in {path}")
        offsets = archive["tree_offsets"]
        max_depth = int(archive["max_depth"])
        config = ForestConfig(
            n_trees=int(archive["n_trees"]),
            max_features_per_split=int(archive["max_features_per_split"]),
            min_samples_leaf=int(archive["min_samples_leaf"]),
            max_depth=None if max_depth < 0 else max_depth,
            bootstrap=bool(int(archive["bootstrap"])),
            seed=int(archive["seed"]),
        )
        trees = []
        for i in range(config.n_trees):
            lo, hi = int(offsets[i]), int(offsets[i + 1])
            trees.append(
                Tree(
                    feature=archive["node_feature"][lo:hi].copy(),
                    threshold=archive["node_threshold"][lo:hi].copy(),
                    left=archive["node_left"][lo:hi].copy(),
                    right=archive["node_right"][lo:hi].copy(),
                    value=archive["node_value"][lo:hi].copy(),
                )
            )
        input_dim = int(archive["input_dim"])
    return Forest(trees=tuple(trees), config=config, input_dim=input_dim)
