"""From-scratch random forest (classifier + regressor) over IQM tables.

Trees grow unlimited-depth on bootstrap samples until nodes are pure or hold
fewer than two samples; split search is exhaustive over a random feature
subset per node (sqrt(p) for classification, all features for regression)
using Gini impurity / variance reduction.  Split decisions depend only on the
ordering of feature values, so any strictly increasing per-feature transform
leaves predictions unchanged.

Everything is deterministic given the seed: per-tree RNGs are spawned from
the master seed with ``numpy.random.SeedSequence``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator

from stackqc.errors import FeatureMismatch, NonFiniteFeatures


@dataclass
class Tree:
    """Flat-array binary decision tree.

    ``feature[i] == -1`` marks a leaf; ``value`` then holds the mean target
    (regression) or the class-1 probability (classification).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    importance: np.ndarray = field(repr=False, default=None)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.float64)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if rows.size == 0:
                continue
            feat = self.feature[node]
            if feat < 0:
                out[rows] = self.value[node]
                continue
            go_left = X[rows, feat] <= self.threshold[node]
            stack.append((self.left[node], rows[go_left]))
            stack.append((self.right[node], rows[~go_left]))
        return out


def _node_impurity(yn: np.ndarray, classification: bool) -> float:
    if classification:
        p1 = yn.mean()
        return float(2.0 * p1 * (1.0 - p1))
    return float(yn.var())


def _split_from_sorted(xs: np.ndarray, ys: np.ndarray, y2s: np.ndarray | None, classification: bool):
    """Split search over pre-sorted feature columns.

    ``xs``/``ys`` hold each candidate column's sorted values and the targets
    in that order; returns (column, threshold, weighted child impurity) or
    None when every within-column neighbour pair is tied.
    """
    n, m = xs.shape
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    n_left = np.arange(1, n, dtype=ys.dtype)[:, None]
    n_right = n - n_left
    if classification:
        c1 = np.cumsum(ys, axis=0)[:-1]
        p1_left = c1 / n_left
        p1_right = (ys[-1:].sum(axis=0) + c1[-1] - c1) / n_right
        cost = n_left * (p1_left - p1_left * p1_left)
        cost += n_right * (p1_right - p1_right * p1_right)
        cost *= 2.0 / n
    else:
        s = np.cumsum(ys, axis=0)[:-1]
        q = np.cumsum(y2s, axis=0)[:-1]
        s_tot = s[-1] + ys[-1]
        q_tot = q[-1] + y2s[-1]
        cost = q - s * s / n_left
        cost += (q_tot - q) - (s_tot - s) ** 2 / n_right
        cost /= n
    cost[~valid] = np.inf
    flat = int(np.argmin(cost))
    pos, col = divmod(flat, m)
    best = cost[pos, col]
    if not np.isfinite(best):
        return None
    return col, float(xs[pos, col]), float(best)


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    classification: bool,
    max_features: int,
    rng: np.random.Generator,
    min_samples_split: int = 2,
    min_samples_leaf: int = 1,
) -> Tree:
    """Fit one tree on (X, y); the caller supplies the bootstrap sample.

    Feature columns are argsorted once at the root; node partitions preserve
    the per-column order, so split search at every node is a cumulative-sum
    pass without re-sorting.
    """
    n_total, p = X.shape
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    importance = np.zeros(p, dtype=np.float64)

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    # split-search arithmetic runs in float32: cheaper cumsums, and the cost
    # comparisons stay deterministic (thresholds remain exact float64 values)
    y32 = y.astype(np.float32)
    y2_32 = y32 * y32 if not classification else None
    presorted = max_features >= p
    if presorted:
        # one argsort at the root; partitions below keep per-column order
        state0 = np.argsort(X, axis=0, kind="stable").astype(np.int32)
        left_flag = np.zeros(n_total, dtype=bool)
    else:
        state0 = np.arange(n_total, dtype=np.int32)
    all_cols = np.arange(p)

    root = new_node()
    stack = [(root, state0)]
    while stack:
        node, state = stack.pop()
        rows = state[:, 0] if presorted else state
        n_node = rows.size
        yn = y[rows]
        leaf_value = float(yn.mean())
        impurity = _node_impurity(yn, classification)
        if n_node < min_samples_split or impurity == 0.0:
            value[node] = leaf_value
            continue
        if presorted:
            cols = all_cols
            sub = state
            xs = X[sub, cols[None, :]]
            ys = y32[sub]
            y2s = y2_32[sub] if y2_32 is not None else None
        else:
            cols = np.sort(rng.choice(p, size=max_features, replace=False))
            xn = X[np.ix_(rows, cols)]
            order = np.argsort(xn, axis=0, kind="stable")
            xs = np.take_along_axis(xn, order, axis=0)
            ys = y32[rows][order]
            y2s = None if classification else ys * ys
        found = _split_from_sorted(xs, ys, y2s, classification)
        if found is None:
            value[node] = leaf_value
            continue
        col, thr, child_cost = found
        feat = int(cols[col])
        go_left = X[rows, feat] <= thr
        n_left = int(go_left.sum())
        if n_left < min_samples_leaf or n_node - n_left < min_samples_leaf:
            value[node] = leaf_value
            continue
        if presorted:
            left_flag[rows] = go_left
            mask = left_flag[state]
            left_state = state.T[mask.T].reshape(p, n_left).T
            right_state = state.T[~mask.T].reshape(p, n_node - n_left).T
        else:
            left_state = rows[go_left]
            right_state = rows[~go_left]
        importance[feat] += n_node / n_total * (impurity - child_cost)
        feature[node] = feat
        threshold[node] = thr
        left_id = new_node()
        right_id = new_node()
        left[node] = left_id
        right[node] = right_id
        stack.append((left_id, left_state))
        stack.append((right_id, right_state))

    return Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        value=np.asarray(value, dtype=np.float64),
        importance=importance,
    )


def _coerce_matrix(X, feature_names=None):
    if isinstance(X, pd.DataFrame):
        names = [str(c) for c in X.columns]
        mat = X.to_numpy(dtype=np.float64)
    else:
        mat = np.asarray(X, dtype=np.float64)
        names = list(feature_names) if feature_names is not None else None
    if mat.ndim != 2:
        raise ValueError(f"feature matrix must be 2D, got shape {mat.shape}")
    if not np.isfinite(mat).all():
        raise NonFiniteFeatures(
            "feature matrix contains non-finite values (the NaN-flag scheme "
            "should have replaced them)"
        )
    return mat, names


class _BaseForest(BaseEstimator):
    _classification = False

    def __init__(self, n_trees=100, seed=0, max_features=None,
                 min_samples_split=2, min_samples_leaf=1):
        self.n_trees = n_trees
        self.seed = seed
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf

    def _resolve_max_features(self, p: int) -> int:
        if self.max_features is None:
            if self._classification:
                return max(1, int(np.sqrt(p)))
            return p
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(p)))
        return min(p, int(self.max_features))

    def _fit_trees(self, X: np.ndarray, y: np.ndarray):
        n, p = X.shape
        m = self._resolve_max_features(p)
        seeds = np.random.SeedSequence(self.seed).spawn(int(self.n_trees))
        trees = []
        oob_fractions = []
        for ss in seeds:
            rng = np.random.Generator(np.random.PCG64(ss))
            sample = rng.integers(0, n, size=n)
            oob_fractions.append(1.0 - np.unique(sample).size / n)
            trees.append(
                grow_tree(
                    X[sample],
                    y[sample],
                    self._classification,
                    m,
                    rng,
                    self.min_samples_split,
                    self.min_samples_leaf,
                )
            )
        self.trees_ = trees
        self.oob_fraction_ = float(np.mean(oob_fractions))
        self._set_importances()
        return self

    def _set_importances(self):
        p = self.n_features_in_
        per_tree = [t.importance / t.importance.sum() for t in self.trees_ if t.importance.sum() > 0]
        if not per_tree:
            warnings.warn("no split in any tree; importances are all zero")
            self.feature_importances_ = np.zeros(p)
            return
        mean = np.mean(per_tree, axis=0)
        self.feature_importances_ = mean / mean.sum()

    def fit(self, X, y):
        mat, names = _coerce_matrix(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        if len(y) != mat.shape[0]:
            raise ValueError("X and y lengths differ")
        if len(y) < 2:
            raise ValueError("need at least 2 samples")
        self.n_features_in_ = mat.shape[1]
        self.feature_names_in_ = names
        return self._fit_trees(mat, self._check_targets(y))

    def _check_targets(self, y):
        return y

    def _aligned_matrix(self, X) -> np.ndarray:
        mat, names = _coerce_matrix(X)
        if names is not None and self.feature_names_in_ is not None:
            if names != self.feature_names_in_:
                if sorted(names) != sorted(self.feature_names_in_):
                    missing = set(self.feature_names_in_) - set(names)
                    raise FeatureMismatch(f"missing features: {sorted(missing)[:5]} ...")
                lookup = {name: i for i, name in enumerate(names)}
                mat = mat[:, [lookup[name] for name in self.feature_names_in_]]
        elif mat.shape[1] != self.n_features_in_:
            raise FeatureMismatch(
                f"expected {self.n_features_in_} features, got {mat.shape[1]}"
            )
        return mat

    def _tree_mean(self, X) -> np.ndarray:
        mat = self._aligned_matrix(X)
        acc = np.zeros(mat.shape[0], dtype=np.float64)
        for tree in self.trees_:
            acc += tree.predict(mat)
        return acc / len(self.trees_)


class ForestRegressor(_BaseForest):
    """Random-forest regressor: mean of per-tree leaf means."""

    _classification = False

    def predict(self, X) -> np.ndarray:
        return self._tree_mean(X)


class ForestClassifier(_BaseForest):
    """Random-forest classifier for binary include/exclude decisions.

    ``predict_proba`` averages per-tree class-1 leaf probabilities (the
    continuous score used for ROC); ``predict`` thresholds it at 0.5.
    """

    _classification = True
    threshold = 0.5

    def _check_targets(self, y):
        classes = np.unique(y)
        if not np.isin(classes, (0.0, 1.0)).all():
            raise ValueError(f"classification labels must be 0/1, got {classes}")
        self.degenerate_ = len(classes) == 1
        if self.degenerate_:
            warnings.warn(
                "single-class training labels; the model predicts a constant",
                UserWarning,
            )
        return y

    def predict_proba(self, X) -> np.ndarray:
        p1 = self._tree_mean(X)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X) -> np.ndarray:
        return (self._tree_mean(X) >= self.threshold).astype(np.int64)
