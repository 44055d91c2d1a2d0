"""Tree and forest structures, prediction, and versioned serialization.

Trees are stored as flat parallel arrays (node 0 is the root; feature -1
marks a leaf). Leaf weights are already scaled by the learning rate, so a
model's margin is base_score plus the sum of tree outputs. Missing values
(NaN) are routed by each split's learned default direction. Thresholds,
weights, and covers serialize as shortest round-trip decimal strings so a
model survives JSON round trips bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

_FORMAT = "bbaudit-gbdt"
_VERSION = 1


class GbdtError(ValueError):
    pass


class EmptyDataset(GbdtError):
    pass


class DimensionMismatch(GbdtError):
    pass


@dataclass
class GbdtParams:
    eta: float = 0.1
    max_depth: int = 6
    reg_lambda: float = 1.0
    gamma: float = 0.0
    n_rounds: int = 100
    min_child_weight: float = 1.0
    subsample: float = 1.0
    early_stopping_rounds: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.eta <= 0:
            raise GbdtError(f"eta must be > 0, got {self.eta}")
        if self.max_depth < 1:
            raise GbdtError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.reg_lambda < 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise GbdtError("reg_lambda, gamma, and min_child_weight must be >= 0")
        # n_rounds 0 is allowed: the model is then just the prior log odds.
        if self.n_rounds < 0:
            raise GbdtError(f"n_rounds must be >= 0, got {self.n_rounds}")
        if not 0 < self.subsample <= 1:
            raise GbdtError(f"subsample must be in (0, 1], got {self.subsample}")


class Tree:
    """One regression tree as parallel numpy arrays."""

    def __init__(self, feature, threshold, default_left, left, right, weight, cover):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.default_left = np.asarray(default_left, dtype=bool)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.weight = np.asarray(weight, dtype=np.float64)
        self.cover = np.asarray(cover, dtype=np.float64)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, i: int) -> bool:
        return self.feature[i] < 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Leaf weight per row; NaN features take the default direction."""
        n = X.shape[0]
        idx = np.zeros(n, dtype=np.int64)
        while True:
            feats = self.feature[idx]
            internal = feats >= 0
            if not internal.any():
                break
            rows = np.nonzero(internal)[0]
            node = idx[rows]
            vals = X[rows, feats[rows]]
            missing = np.isnan(vals)
            go_left = np.where(missing, self.default_left[node], vals < self.threshold[node])
            idx[rows] = np.where(go_left, self.left[node], self.right[node])
        return self.weight[idx]

    def expected_value(self) -> float:
        """Cover-weighted mean leaf output (value of the empty coalition)."""
        leaves = self.feature < 0
        return float(np.dot(self.weight[leaves], self.cover[leaves]) / self.cover[0])

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max()) if self.n_nodes else 0


@dataclass
class GbdtModel:
    base_score: float
    feature_count: int
    trees: list[Tree] = field(default_factory=list)
    params: Optional[GbdtParams] = None
    feature_names: Optional[list[str]] = None
    training_log: list[dict] = field(default_factory=list)
    best_iteration: Optional[int] = None

    def margin(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.feature_count:
            raise DimensionMismatch(
                f"input has {X.shape[1]} features, model expects {self.feature_count}")
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += tree.predict(X)
        return out


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def predict_proba(model: GbdtModel, X: np.ndarray) -> np.ndarray:
    """Probability of the positive (unserved / suspicious) class per row."""
    return sigmoid(model.margin(X))


# ---------------------------------------------------------------------------
# Serialization


def _floats(values) -> list[str]:
    return [repr(float(v)) for v in values]


def model_to_json(model: GbdtModel) -> str:
    doc = {
        "format": _FORMAT,
        "version": _VERSION,
        "base_score": repr(model.base_score),
        "feature_count": model.feature_count,
        "feature_names": model.feature_names,
        "params": asdict(model.params) if model.params is not None else None,
        "best_iteration": model.best_iteration,
        "training_log": model.training_log,
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": _floats(t.threshold),
                "default_left": [int(v) for v in t.default_left],
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "weight": _floats(t.weight),
                "cover": _floats(t.cover),
            }
            for t in model.trees
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def model_from_json(text: str) -> GbdtModel:
    doc = json.loads(text)
    if doc.get("format") != _FORMAT or doc.get("version") != _VERSION:
        raise GbdtError(f"unsupported model document: {doc.get('format')}/{doc.get('version')}")
    trees = [
        Tree(
            feature=t["feature"],
            threshold=[float(v) for v in t["threshold"]],
            default_left=[bool(v) for v in t["default_left"]],
            left=t["left"],
            right=t["right"],
            weight=[float(v) for v in t["weight"]],
            cover=[float(v) for v in t["cover"]],
        )
        for t in doc["trees"]
    ]
    params = GbdtParams(**doc["params"]) if doc.get("params") else None
    return GbdtModel(
        base_score=float(doc["base_score"]),
        feature_count=int(doc["feature_count"]),
        trees=trees,
        params=params,
        feature_names=doc.get("feature_names"),
        training_log=doc.get("training_log", []),
        best_iteration=doc.get("best_iteration"),
    )


def save_model(model: GbdtModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(model) + "\n")


def load_model(path) -> GbdtModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(fh.read())
