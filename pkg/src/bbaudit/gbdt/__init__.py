"""Regularized gradient-boosted-tree binary classifier with exact
per-instance Shapley attribution and evaluation metrics."""

from .explain import shap_matrix, shap_values
from .metrics import auc, confusion, f1, precision_recall, roc_curve
from .search import DEFAULT_SEARCH_SPACE, SearchResult, random_search
from .training import logistic_gradients, logloss, train
from .trees import (
    DimensionMismatch,
    EmptyDataset,
    GbdtError,
    GbdtModel,
    GbdtParams,
    Tree,
    load_model,
    model_from_json,
    model_to_json,
    predict_proba,
    save_model,
    sigmoid,
)

__all__ = [
    "DEFAULT_SEARCH_SPACE",
    "DimensionMismatch",
    "EmptyDataset",
    "GbdtError",
    "GbdtModel",
    "GbdtParams",
    "SearchResult",
    "Tree",
    "auc",
    "confusion",
    "f1",
    "load_model",
    "logistic_gradients",
    "logloss",
    "model_from_json",
    "model_to_json",
    "precision_recall",
    "predict_proba",
    "random_search",
    "roc_curve",
    "save_model",
    "shap_matrix",
    "shap_values",
    "sigmoid",
    "train",
]
