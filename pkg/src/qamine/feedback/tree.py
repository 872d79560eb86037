"""CART trees shared by the DT, RF and GBDT trainers.

Splits route ``x[feature] < threshold`` to the left child. Candidate
thresholds are midpoints between consecutive distinct values; ties between
equally good splits go to the lowest feature index, then the lowest
threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .. import kernels


@dataclass(slots=True)
class Leaf:
    value: float
    n: float


@dataclass(slots=True)
class Split:
    feature: int
    threshold: float
    gain: float
    n: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


def predict_tree(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    _route(node, X, np.arange(X.shape[0]), out)
    return out


def _route(node: TreeNode, X: np.ndarray, rows: np.ndarray, out: np.ndarray) -> None:
    if isinstance(node, Leaf):
        out[rows] = node.value
        return
    go_left = X[rows, node.feature] < node.threshold
    if go_left.any():
        _route(node.left, X, rows[go_left], out)
    if not go_left.all():
        _route(node.right, X, rows[~go_left], out)


def depth(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(depth(node.left), depth(node.right))


def iter_splits(node: TreeNode):
    if isinstance(node, Split):
        yield node
        yield from iter_splits(node.left)
        yield from iter_splits(node.right)


def node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"leaf": node.value, "n": node.n}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "gain": node.gain,
        "n": node.n,
        "left": node_to_dict(node.left),
        "right": node_to_dict(node.right),
    }


def node_from_dict(d: dict) -> TreeNode:
    if "leaf" in d:
        return Leaf(float(d["leaf"]), float(d["n"]))
    return Split(
        int(d["feature"]),
        float(d["threshold"]),
        float(d["gain"]),
        float(d["n"]),
        node_from_dict(d["left"]),
        node_from_dict(d["right"]),
    )


class TreeBuilder:
    """Greedy depth-first CART growth over a fixed design matrix.

    ``criterion`` is ``"gini"`` (targets are 0/1 labels) or ``"sse"``
    (targets are real regression values). ``leaf_value`` maps the row
    indices of a leaf to its prediction.
    """

    def __init__(
        self,
        X: np.ndarray,
        target: np.ndarray,
        weight: np.ndarray,
        criterion: str,
        max_depth: int,
        min_leaf: int,
        leaf_value: Callable[[np.ndarray], float],
        feature_sampler: Callable[[], Sequence[int]] | None = None,
    ) -> None:
        if criterion not in ("gini", "sse"):
            raise ValueError(f"unknown criterion {criterion!r}")
        if min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.w = np.ascontiguousarray(weight, dtype=np.float64)
        self.wt = np.ascontiguousarray(self.w * target, dtype=np.float64)
        self.criterion = criterion
        self.max_depth = max_depth
        self.min_leaf = float(min_leaf)
        self.leaf_value = leaf_value
        self.feature_sampler = feature_sampler
        self.n_features = self.X.shape[1]
        # rows with zero weight (out-of-bag) never enter a node
        live = np.flatnonzero(self.w > 0)
        self._sorted = [live[np.argsort(self.X[live, f], kind="mergesort")] for f in range(self.n_features)]

    def build(self) -> TreeNode:
        mask = np.zeros(self.X.shape[0], dtype=bool)
        mask[self._sorted[0] if self.n_features else np.flatnonzero(self.w > 0)] = True
        return self._grow(mask, 0)

    def _node_stats(self, rows: np.ndarray) -> tuple[float, float]:
        return float(np.cumsum(self.w[rows])[-1]), float(np.cumsum(self.wt[rows])[-1])

    def _grow(self, mask: np.ndarray, level: int) -> TreeNode:
        rows = np.flatnonzero(mask)
        n_w, t_w = self._node_stats(rows)
        leaf = Leaf(self.leaf_value(rows), n_w)
        if level >= self.max_depth or n_w < 2 * self.min_leaf:
            return leaf
        if self.criterion == "gini":
            parent = 2.0 * t_w * (n_w - t_w) / n_w
            if parent <= 0.0:
                return leaf
        else:
            parent = t_w * t_w / n_w

        features = range(self.n_features) if self.feature_sampler is None else sorted(self.feature_sampler())
        best_f, best_thr, best_gain = -1, 0.0, 0.0
        for f in features:
            idx = self._sorted[f][mask[self._sorted[f]]]
            xs = self.X[idx, f]
            if self.criterion == "gini":
                child, thr = kernels.best_split_gini(xs, self.w[idx], self.wt[idx], self.min_leaf)
                gain = parent - child
            else:
                score, thr = kernels.best_split_sse(xs, self.w[idx], self.wt[idx], self.min_leaf)
                gain = score - parent
            if gain > best_gain:
                best_f, best_thr, best_gain = f, thr, gain
        if best_f < 0:
            return leaf

        go_left = mask & (self.X[:, best_f] < best_thr)
        go_right = mask & ~go_left
        return Split(
            int(best_f),
            float(best_thr),
            float(best_gain),
            n_w,
            self._grow(go_left, level + 1),
            self._grow(go_right, level + 1),
        )
