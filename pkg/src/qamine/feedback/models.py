"""Feedback model types, prediction and JSON (de)serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import ClassVar, Sequence

import numpy as np

from ..errors import FeatureOrderMismatch, QamineError
from ..features import FEATURE_ORDER_VERSION, BehaviorFeatures
from ..session import IMPRESSION_ORDER_VERSION, ImpressionSignals
from .tree import TreeNode, node_from_dict, node_to_dict, predict_tree

MODEL_FORMAT = "qamine.feedback/1"


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class FeedbackModel:
    kind: ClassVar[str] = ""
    feature_order_version: str = FEATURE_ORDER_VERSION
    meta: dict = field(default_factory=dict)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "kind": self.kind,
            "feature_order_version": self.feature_order_version,
            "params": self._params(),
            "meta": self.meta,
        }


@dataclass
class BaselineModel(FeedbackModel):
    """Single raw feature, min-max scaled over the training rows."""

    kind: ClassVar[str] = "baseline"
    feature_index: int = 0
    lo: float = 0.0
    hi: float = 0.0

    def predict_proba(self, X):
        x = np.asarray(X, dtype=np.float64)[:, self.feature_index]
        if self.hi == self.lo:
            return np.full(x.shape[0], 0.5)
        return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def _params(self):
        return {"feature_index": self.feature_index, "min": self.lo, "max": self.hi}


@dataclass
class LogisticModel(FeedbackModel):
    kind: ClassVar[str] = "lr"
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bias: float = 0.0
    mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    std: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def standardize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def predict_proba(self, X):
        return sigmoid(self.standardize(X) @ self.weights + self.bias)

    def _params(self):
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "standardization": {"mean": self.mean.tolist(), "std": self.std.tolist()},
        }


@dataclass
class TreeModel(FeedbackModel):
    kind: ClassVar[str] = "dt"
    root: TreeNode | None = None

    def predict_proba(self, X):
        return np.clip(predict_tree(self.root, np.asarray(X, dtype=np.float64)), 0.0, 1.0)

    def _params(self):
        return {"tree": node_to_dict(self.root)}


@dataclass
class ForestModel(FeedbackModel):
    kind: ClassVar[str] = "rf"
    trees: list = field(default_factory=list)
    tree_seeds: list = field(default_factory=list)

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += predict_tree(t, X)
        return np.clip(total / len(self.trees), 0.0, 1.0)

    def _params(self):
        return {"trees": [node_to_dict(t) for t in self.trees], "tree_seeds": list(self.tree_seeds)}


@dataclass
class BoostedModel(FeedbackModel):
    kind: ClassVar[str] = "gbdt"
    trees: list = field(default_factory=list)
    learning_rate: float = 0.1
    base_score: float = 0.0

    def raw_score(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        f = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            f += self.learning_rate * predict_tree(t, X)
        return f

    def predict_proba(self, X):
        return sigmoid(self.raw_score(X))

    def _params(self):
        return {
            "trees": [node_to_dict(t) for t in self.trees],
            "learning_rate": self.learning_rate,
            "base_score": self.base_score,
        }


def _from_params(kind: str, params: dict) -> FeedbackModel:
    if kind == "baseline":
        return BaselineModel(feature_index=int(params["feature_index"]), lo=params["min"], hi=params["max"])
    if kind == "lr":
        st = params["standardization"]
        return LogisticModel(
            weights=np.array(params["weights"], dtype=np.float64),
            bias=params["bias"],
            mean=np.array(st["mean"], dtype=np.float64),
            std=np.array(st["std"], dtype=np.float64),
        )
    if kind == "dt":
        return TreeModel(root=node_from_dict(params["tree"]))
    if kind == "rf":
        return ForestModel(trees=[node_from_dict(t) for t in params["trees"]], tree_seeds=list(params["tree_seeds"]))
    if kind == "gbdt":
        return BoostedModel(
            trees=[node_from_dict(t) for t in params["trees"]],
            learning_rate=params["learning_rate"],
            base_score=params["base_score"],
        )
    raise QamineError(f"unknown feedback model kind {kind!r}")


def model_from_dict(d: dict) -> FeedbackModel:
    if d.get("format") != MODEL_FORMAT:
        raise QamineError(f"unsupported model format {d.get('format')!r}")
    model = _from_params(d["kind"], d["params"])
    model.feature_order_version = d["feature_order_version"]
    model.meta = d.get("meta", {})
    return model


def dumps_model(model: FeedbackModel) -> str:
    return json.dumps(model.to_dict(), sort_keys=True, indent=1) + "\n"


def loads_model(text: str) -> FeedbackModel:
    return model_from_dict(json.loads(text))


def _version_of(items) -> str:
    if isinstance(items[0], ImpressionSignals):
        return IMPRESSION_ORDER_VERSION
    return FEATURE_ORDER_VERSION


def predict(model: FeedbackModel, features: BehaviorFeatures | Sequence[BehaviorFeatures] | np.ndarray):
    """Score one feature vector (returns float) or many (returns array).

    A plain ndarray is assumed to follow the model's own feature order.
    """
    if isinstance(features, np.ndarray):
        return model.predict_proba(np.atleast_2d(features))
    single = isinstance(features, (BehaviorFeatures, ImpressionSignals))
    items = [features] if single else list(features)
    if not items:
        return np.zeros(0)
    version = _version_of(items)
    if version != model.feature_order_version:
        raise FeatureOrderMismatch(
            f"model expects {model.feature_order_version!r}, input is {version!r}"
        )
    if version == IMPRESSION_ORDER_VERSION:
        X = np.array([imp.as_vector() for imp in items], dtype=np.float64)
    else:
        X = np.array([f.values for f in items], dtype=np.float64)
    scores = model.predict_proba(X)
    return float(scores[0]) if single else scores
