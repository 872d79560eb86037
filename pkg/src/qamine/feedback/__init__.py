"""Implicit relevance feedback classifiers over aggregated behavior features."""

from .inspect import extract_rules, feature_importance, predict_label_aggregated
from .models import (
    BaselineModel,
    BoostedModel,
    FeedbackModel,
    ForestModel,
    LogisticModel,
    TreeModel,
    dumps_model,
    loads_model,
    predict,
)
from .train import (
    DEFAULTS,
    FeedbackDatasetRow,
    lr_objective,
    rows_to_xy,
    split_indices,
    train_baseline,
    train_dt,
    train_gbdt,
    train_lr,
    train_named,
    train_rf,
)

__all__ = [
    "BaselineModel",
    "BoostedModel",
    "DEFAULTS",
    "FeedbackDatasetRow",
    "FeedbackModel",
    "ForestModel",
    "LogisticModel",
    "TreeModel",
    "dumps_model",
    "extract_rules",
    "feature_importance",
    "loads_model",
    "lr_objective",
    "predict",
    "predict_label_aggregated",
    "rows_to_xy",
    "split_indices",
    "train_baseline",
    "train_dt",
    "train_gbdt",
    "train_lr",
    "train_named",
    "train_rf",
]
