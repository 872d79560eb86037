"""Trainers for the implicit-feedback classifiers.

All trainers take a design matrix ``X`` (rows follow one fixed feature order)
and boolean labels ``y``; helpers at the bottom adapt ``FeedbackDatasetRow``
lists. Every trainer is deterministic for a given seed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import BadFeatureIndex, DegenerateLabels, EmptyDataset
from ..features import FEATURE_ORDER_VERSION, BehaviorFeatures
from .models import (
    BaselineModel,
    BoostedModel,
    ForestModel,
    LogisticModel,
    TreeModel,
    sigmoid,
)
from .tree import TreeBuilder, predict_tree


@dataclass(frozen=True, slots=True)
class FeedbackDatasetRow:
    qp_id: str
    features: BehaviorFeatures
    label: bool


def rows_to_xy(rows) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([r.features.values for r in rows], dtype=np.float64)
    y = np.array([r.label for r in rows], dtype=bool)
    if X.size and not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains NaN or infinite values")
    return X, y


def _check_xy(X, y, need_both: bool) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(bool)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyDataset("no training rows")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y differ in length")
    if need_both and (y.all() or not y.any()):
        raise DegenerateLabels("training labels contain a single class")
    return X, y


def train_baseline(X, y, feature_index: int, version: str = FEATURE_ORDER_VERSION) -> BaselineModel:
    X, y = _check_xy(X, y, need_both=False)
    if not 0 <= feature_index < X.shape[1]:
        raise BadFeatureIndex(f"feature index {feature_index} outside [0, {X.shape[1]})")
    col = X[:, feature_index]
    return BaselineModel(
        feature_order_version=version,
        meta={"trainer": "baseline", "feature_index": feature_index},
        feature_index=feature_index,
        lo=float(col.min()),
        hi=float(col.max()),
    )


def lr_objective(w: np.ndarray, b: float, Xs: np.ndarray, y: np.ndarray, l2: float):
    """Mean logistic loss plus ``l2/2 * ||w||^2`` and its gradient.

    Returns ``(loss, grad_w, grad_b)``; the bias is not regularized.
    """
    z = Xs @ w + b
    # log(1 + e^z) - y z, written to avoid overflow
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * float(w @ w)
    r = sigmoid(z) - y
    grad_w = Xs.T @ r / Xs.shape[0] + l2 * w
    grad_b = float(r.mean())
    return float(loss), grad_w, grad_b


def train_lr(
    X,
    y,
    epochs: int = 300,
    learning_rate: float = 0.1,
    l2: float = 1e-4,
    seed: int = 0,
    version: str = FEATURE_ORDER_VERSION,
    loss_trace: list | None = None,
) -> LogisticModel:
    """Full-batch gradient descent on z-scored features from zero init."""
    X, y = _check_xy(X, y, need_both=True)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    Xs = (X - mean) / std
    yf = y.astype(np.float64)
    w = np.zeros(X.shape[1])
    b = 0.0
    for _ in range(epochs):
        loss, gw, gb = lr_objective(w, b, Xs, yf, l2)
        if loss_trace is not None:
            loss_trace.append(loss)
        w = w - learning_rate * gw
        b = b - learning_rate * gb
    if loss_trace is not None:
        loss_trace.append(lr_objective(w, b, Xs, yf, l2)[0])
    return LogisticModel(
        feature_order_version=version,
        meta={
            "trainer": "lr",
            "epochs": epochs,
            "learning_rate": learning_rate,
            "l2": l2,
            "seed": seed,
            "standardized": True,
        },
        weights=w,
        bias=b,
        mean=mean,
        std=std,
    )


def _gini_tree(X, y, weight, max_depth, min_leaf, sampler=None):
    yf = y.astype(np.float64)
    wy = weight * yf

    def leaf_value(rows):
        return float(np.cumsum(wy[rows])[-1] / np.cumsum(weight[rows])[-1])

    return TreeBuilder(X, yf, weight, "gini", max_depth, min_leaf, leaf_value, sampler).build()


def train_dt(
    X, y, max_depth: int = 5, min_leaf: int = 20, seed: int = 0, version: str = FEATURE_ORDER_VERSION
) -> TreeModel:
    """CART with Gini impurity; leaves predict the positive fraction."""
    X, y = _check_xy(X, y, need_both=False)
    root = _gini_tree(X, y, np.ones(X.shape[0]), max_depth, min_leaf)
    return TreeModel(
        feature_order_version=version,
        meta={"trainer": "dt", "max_depth": max_depth, "min_leaf": min_leaf, "seed": seed},
        root=root,
    )


def train_rf(
    X,
    y,
    n_trees: int = 100,
    max_depth: int = 5,
    min_leaf: int = 20,
    feature_subsample: int | None = None,
    seed: int = 0,
    bootstrap: bool = True,
    version: str = FEATURE_ORDER_VERSION,
) -> ForestModel:
    """Bagged CART trees with per-split feature subsampling.

    ``feature_subsample`` defaults to ceil(sqrt(n_features)). Tree ``i`` draws
    its bootstrap sample and feature subsets from its own recorded seed, so
    trees can be grown in any order (``QAMINE_THREADS``) with identical output.
    """
    X, y = _check_xy(X, y, need_both=False)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    n, m = X.shape
    k = feature_subsample or math.ceil(math.sqrt(m))
    k = min(k, m)
    tree_seeds = [int(s) for s in np.random.default_rng(seed).integers(0, 2**63 - 1, size=n_trees)]

    def grow(tree_seed: int):
        rng = np.random.default_rng(tree_seed)
        if bootstrap:
            weight = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)
        else:
            weight = np.ones(n)
        sampler = None if k == m else (lambda: rng.choice(m, size=k, replace=False))
        return _gini_tree(X, y, weight, max_depth, min_leaf, sampler)

    workers = kernels.max_threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(grow, tree_seeds))
    else:
        trees = [grow(s) for s in tree_seeds]
    return ForestModel(
        feature_order_version=version,
        meta={
            "trainer": "rf",
            "n_trees": n_trees,
            "max_depth": max_depth,
            "min_leaf": min_leaf,
            "feature_subsample": k,
            "bootstrap": bootstrap,
            "seed": seed,
        },
        trees=trees,
        tree_seeds=tree_seeds,
    )


def logistic_loss(y: np.ndarray, raw: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


def train_gbdt(
    X,
    y,
    n_trees: int = 200,
    learning_rate: float = 0.1,
    max_depth: int = 3,
    min_leaf: int = 20,
    l2_leaf: float = 1.0,
    seed: int = 0,
    version: str = FEATURE_ORDER_VERSION,
    loss_trace: list | None = None,
) -> BoostedModel:
    """Gradient boosting on logistic loss.

    Each round fits a variance-reduction regression tree to the residuals
    ``y - p`` and sets every leaf to the Newton step ``sum(r) / (sum(h) + l2_leaf)``
    with ``h = p (1 - p)``.
    """
    X, y = _check_xy(X, y, need_both=True)
    yf = y.astype(np.float64)
    rate = yf.mean()
    base = math.log(rate / (1.0 - rate))
    raw = np.full(X.shape[0], base)
    ones = np.ones(X.shape[0])
    trees = []
    if loss_trace is not None:
        loss_trace.append(logistic_loss(yf, raw))
    for _ in range(n_trees):
        p = sigmoid(raw)
        r = yf - p
        h = p * (1.0 - p)

        def leaf_value(rows, r=r, h=h):
            return float(np.cumsum(r[rows])[-1] / (np.cumsum(h[rows])[-1] + l2_leaf))

        tree = TreeBuilder(X, r, ones, "sse", max_depth, min_leaf, leaf_value).build()
        trees.append(tree)
        raw = raw + learning_rate * predict_tree(tree, X)
        if loss_trace is not None:
            loss_trace.append(logistic_loss(yf, raw))
    return BoostedModel(
        feature_order_version=version,
        meta={
            "trainer": "gbdt",
            "n_trees": n_trees,
            "learning_rate": learning_rate,
            "max_depth": max_depth,
            "min_leaf": min_leaf,
            "l2_leaf": l2_leaf,
            "seed": seed,
        },
        trees=trees,
        learning_rate=learning_rate,
        base_score=base,
    )


# Default hyperparameters per trainer; the CLI and pipeline read these.
DEFAULTS = {
    "lr": {"epochs": 300, "learning_rate": 0.1, "l2": 1e-4},
    "dt": {"max_depth": 5, "min_leaf": 20},
    "rf": {"n_trees": 100, "max_depth": 5, "min_leaf": 20},
    "gbdt": {"n_trees": 200, "learning_rate": 0.1, "max_depth": 3, "min_leaf": 20, "l2_leaf": 1.0},
}


def train_named(kind: str, X, y, seed: int = 0, version: str = FEATURE_ORDER_VERSION, **overrides):
    """Dispatch on ``lr|dt|rf|gbdt|baseline:INDEX`` with default hyperparameters."""
    if kind.startswith("baseline:"):
        try:
            index = int(kind.split(":", 1)[1])
        except ValueError:
            raise BadFeatureIndex(f"bad baseline model name {kind!r}") from None
        return train_baseline(X, y, index, version=version)
    trainers = {"lr": train_lr, "dt": train_dt, "rf": train_rf, "gbdt": train_gbdt}
    if kind not in trainers:
        raise ValueError(f"unknown model kind {kind!r}")
    params = {**DEFAULTS[kind], **overrides}
    return trainers[kind](X, y, seed=seed, version=version, **params)


def split_indices(n: int, seed: int, proportions=(7, 1, 1)) -> tuple[np.ndarray, ...]:
    """Seeded shuffle cut into consecutive parts with the given proportions.

    The default 7:1:1 reproduces a 14k/2k/2k train/dev/test split at any
    scale. Part sizes are floored; the remainder goes to the first part.
    """
    perm = np.random.default_rng(seed).permutation(n)
    total = float(sum(proportions))
    sizes = [int(n * p / total) for p in proportions]
    sizes[0] += n - sum(sizes)
    bounds = np.cumsum([0] + sizes)
    return tuple(perm[bounds[i]:bounds[i + 1]] for i in range(len(sizes)))
