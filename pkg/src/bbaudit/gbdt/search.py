"""Seeded random hyperparameter search selected by validation AUC.

Deterministic for a fixed seed: the sampled trial sequence, fold
assignment, and the winning configuration are all reproducible. Ties keep
the earlier trial.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .metrics import auc
from .trees import GbdtError, GbdtParams, predict_proba
from .training import train

# Search space values: a list/tuple of choices, or a (low, high) numeric
# range sampled uniformly (integer bounds sample integers inclusively).
DEFAULT_SEARCH_SPACE: dict[str, object] = {
    "eta": (0.05, 0.4),
    "max_depth": (2, 6),
    "reg_lambda": (0.0, 4.0),
    "gamma": (0.0, 0.5),
    "min_child_weight": (0.0, 4.0),
    "subsample": [0.6, 0.7, 0.8, 0.9, 1.0],
    "n_rounds": (20, 80),
}


@dataclass
class SearchResult:
    best_params: GbdtParams
    best_auc: float
    trials: list[dict]


def _sample(space: Mapping[str, object], rng: np.random.Generator) -> dict:
    out = {}
    for name in sorted(space):
        spec = space[name]
        if isinstance(spec, (list, set, frozenset)):
            choices = sorted(spec) if isinstance(spec, (set, frozenset)) else list(spec)
            out[name] = choices[int(rng.integers(len(choices)))]
        elif isinstance(spec, tuple) and len(spec) == 2:
            lo, hi = spec
            if isinstance(lo, int) and isinstance(hi, int):
                out[name] = int(rng.integers(lo, hi + 1))
            else:
                out[name] = float(rng.uniform(lo, hi))
        else:
            raise GbdtError(f"search space entry {name}={spec!r} is not a list or (low, high) pair")
    return out


def _stratified_folds(y: np.ndarray, n_folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    for cls in (0, 1):
        idx = np.nonzero(y == cls)[0]
        idx = idx[rng.permutation(len(idx))]
        for i, row in enumerate(idx):
            folds[i % n_folds].append(int(row))
    return [np.array(sorted(f), dtype=int) for f in folds]


def random_search(
    X: np.ndarray,
    y: np.ndarray,
    space: Optional[Mapping[str, object]] = None,
    budget: int = 20,
    seed: int = 0,
    valid: Optional[tuple[np.ndarray, np.ndarray]] = None,
    n_folds: int = 3,
    base_params: Optional[GbdtParams] = None,
) -> SearchResult:
    """Sample `budget` configurations and keep the best by mean validation
    AUC, either on a supplied holdout or by stratified cross-validation."""
    if budget < 1:
        raise GbdtError(f"budget must be >= 1, got {budget}")
    space = dict(DEFAULT_SEARCH_SPACE if space is None else space)
    base = base_params if base_params is not None else GbdtParams()
    rng = np.random.default_rng(seed)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(int)

    if valid is None:
        folds = _stratified_folds(y, n_folds, rng)

    best_params = None
    best_score = -np.inf
    trials = []
    for trial_no in range(budget):
        sampled = _sample(space, rng)
        params = replace(base, **sampled, seed=seed)
        if valid is not None:
            model = train(X, y, params, valid=valid)
            scores = [auc(predict_proba(model, valid[0]), valid[1])]
        else:
            scores = []
            for test_idx in folds:
                train_idx = np.array(sorted(set(range(len(y))) - set(test_idx.tolist())), dtype=int)
                model = train(X[train_idx], y[train_idx], params)
                scores.append(auc(predict_proba(model, X[test_idx]), y[test_idx]))
        mean_auc = float(np.mean(scores))
        trials.append({"trial": trial_no, "params": sampled, "mean_auc": mean_auc})
        if mean_auc > best_score:
            best_score = mean_auc
            best_params = params
    return SearchResult(best_params=best_params, best_auc=best_score, trials=trials)
