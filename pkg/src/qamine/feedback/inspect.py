"""Feature importance, decision-rule extraction and label aggregation."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import EmptyGroup, UnsupportedModel
from ..features import FEATURE_NAMES
from ..session import IMPRESSION_VECTOR_FIELDS, ImpressionSignals
from .models import BoostedModel, FeedbackModel, ForestModel, TreeModel, predict
from .tree import Leaf, TreeNode, iter_splits


def _trees(model: FeedbackModel) -> list[TreeNode]:
    if isinstance(model, TreeModel):
        return [model.root]
    if isinstance(model, (ForestModel, BoostedModel)):
        return list(model.trees)
    raise UnsupportedModel(f"feature importance needs a tree model, got {model.kind!r}")


def feature_importance(model: FeedbackModel, n_features: int | None = None) -> list[tuple[int, float]]:
    """Summed split gain per feature, normalized to 1, largest first.

    Gini trees use weighted impurity decrease; boosted trees use the
    squared-error gain of each split. Features never split on get weight 0.
    """
    trees = _trees(model)
    splits = [s for t in trees for s in iter_splits(t)]
    if n_features is None:
        n_features = len(FEATURE_NAMES) if model.feature_order_version.startswith("behavior") else len(IMPRESSION_VECTOR_FIELDS)
        if splits:
            n_features = max(n_features, 1 + max(s.feature for s in splits))
    totals = np.zeros(n_features)
    for s in splits:
        totals[s.feature] += s.gain
    denom = totals.sum()
    weights = totals / denom if denom > 0 else totals
    ranked = sorted(range(n_features), key=lambda i: (-weights[i], i))
    return [(i, float(weights[i])) for i in ranked]


def _names(model: FeedbackModel) -> Sequence[str]:
    if model.feature_order_version.startswith("impression"):
        return IMPRESSION_VECTOR_FIELDS
    return FEATURE_NAMES


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def extract_rules(model: FeedbackModel, min_leaf_purity: float = 0.0) -> list[str]:
    """Render each root-to-leaf path of a decision tree as a rule.

    Paths are visited left subtree first; a leaf is kept when
    ``max(v, 1 - v) >= min_leaf_purity`` where ``v`` is its positive fraction.
    """
    if not isinstance(model, TreeModel):
        raise UnsupportedModel(f"rule extraction needs a decision tree, got {model.kind!r}")
    names = _names(model)
    rules: list[str] = []

    def walk(node: TreeNode, conds: list[str]) -> None:
        if isinstance(node, Leaf):
            purity = max(node.value, 1.0 - node.value)
            if purity >= min_leaf_purity:
                label = "relevant" if node.value >= 0.5 else "irrelevant"
                lhs = " AND ".join(conds) if conds else "always"
                rules.append(f"{lhs} -> {label} (purity={purity:.3f}, support={node.n:g})")
            return
        name = names[node.feature]
        walk(node.left, conds + [f"{name} < {_fmt(node.threshold)}"])
        walk(node.right, conds + [f"{name} >= {_fmt(node.threshold)}"])

    walk(model.root, [])
    return rules


def predict_label_aggregated(model: FeedbackModel, impressions: Sequence[ImpressionSignals]) -> bool:
    """Average per-impression scores for one pair; relevant when mean >= 0.5."""
    if not impressions:
        raise EmptyGroup("no impressions for this pair")
    scores = predict(model, list(impressions))
    return bool(np.mean(scores) >= 0.5)
