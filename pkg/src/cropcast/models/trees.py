"""Lag-feature regression trees: bagged forests and shrinkage boosting.

Feature rows hold the L most recent prices (most recent first) plus the
cyclical month encoding sin(2*pi*m/12), cos(2*pi*m/12).  Trees grow by
greedy variance reduction with thresholds at midpoints of consecutive
sorted feature values; gain ties break toward the lowest feature index,
then the lowest threshold, so fitting is deterministic given the seed.

Multi-step prediction is recursive: each one-step forecast is pushed onto
the lag window and the month encoding advances with the calendar.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from ..errors import InputError
from ..timeseries import MonthSeries

SEASON = 12
ALLOWED_LAGS = (6, 12, 18)


def month_encoding(month: int) -> tuple:
    angle = 2.0 * np.pi * month / SEASON
    return float(np.sin(angle)), float(np.cos(angle))


@dataclass(frozen=True)
class LagFeatures:
    """Design matrix for one series: columns are lag1..lagL, month_sin, month_cos."""

    X: np.ndarray
    y: np.ndarray
    n_lags: int

    def __len__(self) -> int:
        return len(self.y)


def build_lag_features(history: MonthSeries, n_lags: int) -> LagFeatures:
    n = len(history)
    if n <= n_lags:
        raise InputError(f"need more than {n_lags} observations, got {n}")
    v = history.values
    rows = n - n_lags
    X = np.empty((rows, n_lags + 2))
    y = np.empty(rows)
    for i in range(rows):
        t = n_lags + i
        X[i, :n_lags] = v[t - 1 :: -1][:n_lags]  # P_{t-1} .. P_{t-L}
        s, c = month_encoding(history.stamp_at(t).month)
        X[i, n_lags] = s
        X[i, n_lags + 1] = c
        y[i] = v[t]
    return LagFeatures(X=X, y=y, n_lags=n_lags)


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = np.nan
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    value: float = np.nan

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def predict_one(self, x: np.ndarray) -> float:
        node = self
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.value


def _best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray, min_leaf: int):
    """Minimal weighted child SSE over candidate features and midpoints."""
    n = len(y)
    best = None  # (sse, feature, threshold)
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        total_sum = csum[-1]
        total_sq = csq[-1]
        k = np.arange(min_leaf, n - min_leaf + 1)
        if k.size == 0:
            continue
        valid = xs[k - 1] < xs[k]
        if not valid.any():
            continue
        k = k[valid]
        left_sum = csum[k - 1]
        left_sq = csq[k - 1]
        nl = k.astype(float)
        nr = n - nl
        sse = (left_sq - left_sum**2 / nl) + (
            (total_sq - left_sq) - (total_sum - left_sum) ** 2 / nr
        )
        i = int(np.argmin(sse))
        cand = float(sse[i])
        thr = 0.5 * (xs[k[i] - 1] + xs[k[i]])
        if best is None or cand < best[0] - 1e-12 * max(abs(best[0]), 1.0):
            best = (cand, int(f), float(thr))
    return best


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int,
    min_samples_leaf: int = 1,
    n_candidate_features: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    leaf_lambda: float = 0.0,
) -> TreeNode:
    """Greedy recursive partitioning minimizing weighted child squared error.

    ``n_candidate_features`` draws that many features per node (the sqrt(d)
    rule when set); ``leaf_lambda`` shrinks leaf values toward zero as
    sum(y)/(count + lambda) for boosting stages.
    """
    if len(y) < 2 and max_depth > 0 and len(y) < 1:
        raise InputError("fit_tree needs at least one row")
    d = X.shape[1]

    def leaf(idx: np.ndarray) -> TreeNode:
        s = float(y[idx].sum())
        return TreeNode(value=s / (len(idx) + leaf_lambda))

    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        if depth >= max_depth or len(idx) < 2 * min_samples_leaf or len(idx) < 2:
            return leaf(idx)
        yi = y[idx]
        if np.ptp(yi) == 0.0:
            return leaf(idx)
        if n_candidate_features is not None and n_candidate_features < d:
            feats = np.sort(rng.choice(d, size=n_candidate_features, replace=False))
        else:
            feats = np.arange(d)
        found = _best_split(X[idx], yi, feats, min_samples_leaf)
        if found is None:
            return leaf(idx)
        _, f, thr = found
        mask = X[idx, f] <= thr
        left_idx = idx[mask]
        right_idx = idx[~mask]
        if len(left_idx) < min_samples_leaf or len(right_idx) < min_samples_leaf:
            return leaf(idx)
        node = TreeNode(feature=f, threshold=thr)
        node.left = grow(left_idx, depth + 1)
        node.right = grow(right_idx, depth + 1)
        return node

    return grow(np.arange(len(y)), 0)


@dataclass(frozen=True)
class ForestSpec:
    n_lags: int = 12
    n_estimators: int = 100
    max_depth: int = 15
    min_samples_leaf: int = 2
    bootstrap: bool = True
    feature_subsample: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_lags < 1 or self.n_estimators < 1 or self.max_depth < 0:
            raise InputError("forest spec values must be positive")


@dataclass(frozen=True)
class BoostSpec:
    n_lags: int = 12
    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int = 6
    row_subsample: float = 0.8
    col_subsample: float = 0.8
    leaf_lambda: float = 1.0
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.learning_rate <= 1.0:
            raise InputError("learning rate must be in (0, 1]")
        if self.leaf_lambda < 0:
            raise InputError("leaf penalty must be >= 0")


class LagModel(Protocol):
    n_lags: int

    def predict_one(self, x: np.ndarray) -> float: ...


@dataclass
class RandomForest:
    spec: ForestSpec
    trees: list = field(default_factory=list)

    @property
    def n_lags(self) -> int:
        return self.spec.n_lags

    def predict_one(self, x: np.ndarray) -> float:
        return float(np.mean([t.predict_one(x) for t in self.trees]))


@dataclass
class BoostedEnsemble:
    spec: BoostSpec
    base: float = 0.0
    trees: list = field(default_factory=list)
    train_sse_path: Optional[np.ndarray] = None

    @property
    def n_lags(self) -> int:
        return self.spec.n_lags

    def predict_one(self, x: np.ndarray) -> float:
        acc = self.base
        eta = self.spec.learning_rate
        for t in self.trees:
            acc += eta * t.predict_one(x)
        return float(acc)


def rf_fit(history: MonthSeries, spec: ForestSpec) -> RandomForest:
    """Bag of trees on bootstrap resamples with per-node sqrt(d) features."""
    feats = build_lag_features(history, spec.n_lags)
    X, y = feats.X, feats.y
    n, d = X.shape
    k_feats = max(1, int(np.sqrt(d)))
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.n_estimators)
    forest = RandomForest(spec=spec)
    for s in seeds:
        rng = np.random.default_rng(s)
        if spec.bootstrap:
            idx = rng.integers(0, n, size=n)
            Xb, yb = X[idx], y[idx]
        else:
            Xb, yb = X, y
        tree = fit_tree(
            Xb, yb, spec.max_depth, spec.min_samples_leaf,
            n_candidate_features=k_feats if spec.feature_subsample else None,
            rng=rng,
        )
        forest.trees.append(tree)
    return forest


def gbm_fit(history: MonthSeries, spec: BoostSpec) -> BoostedEnsemble:
    """Stagewise squared-error boosting on row/column subsamples."""
    feats = build_lag_features(history, spec.n_lags)
    X, y = feats.X, feats.y
    n, d = X.shape
    model = BoostedEnsemble(spec=spec, base=float(y.mean()))
    pred = np.full(n, model.base)
    sse_path = np.empty(spec.n_estimators + 1)
    sse_path[0] = float(((y - pred) ** 2).sum())
    seeds = np.random.SeedSequence(spec.seed).spawn(max(spec.n_estimators, 1))
    n_rows = max(1, int(round(spec.row_subsample * n)))
    n_cols = max(1, int(round(spec.col_subsample * d)))
    for k in range(spec.n_estimators):
        rng = np.random.default_rng(seeds[k])
        rows = (
            np.sort(rng.choice(n, size=n_rows, replace=False))
            if n_rows < n
            else np.arange(n)
        )
        cols = (
            np.sort(rng.choice(d, size=n_cols, replace=False))
            if n_cols < d
            else np.arange(d)
        )
        resid = y - pred
        Xs = X[np.ix_(rows, cols)]
        tree = fit_tree(
            Xs, resid[rows], spec.max_depth, spec.min_samples_leaf,
            leaf_lambda=spec.leaf_lambda,
        )
        remapped = _remap_features(tree, cols)
        model.trees.append(remapped)
        for i in range(n):
            pred[i] += spec.learning_rate * remapped.predict_one(X[i])
        sse_path[k + 1] = float(((y - pred) ** 2).sum())
    model.train_sse_path = sse_path
    return model


def _remap_features(node: TreeNode, cols: np.ndarray) -> TreeNode:
    """Rewrite column-subset feature indices back to full-matrix indices."""
    if node.is_leaf:
        return node
    node.feature = int(cols[node.feature])
    _remap_features(node.left, cols)
    _remap_features(node.right, cols)
    return node


def recursive_forecast(model: LagModel, history: MonthSeries, h: int) -> np.ndarray:
    """Iterate one-step predictions, feeding each back as the newest lag."""
    if h < 1:
        raise InputError(f"horizon must be >= 1, got {h}")
    L = model.n_lags
    if len(history) < L:
        raise InputError(f"history shorter than lag window {L}")
    window = list(history.values[-L:][::-1])  # most recent first
    out = np.empty(h)
    last = history.end
    x = np.empty(L + 2)
    for j in range(h):
        stamp = last.add_months(j + 1)
        s, c = month_encoding(stamp.month)
        x[:L] = window[:L]
        x[L] = s
        x[L + 1] = c
        pred = model.predict_one(x)
        out[j] = pred
        window.insert(0, pred)
    return out
