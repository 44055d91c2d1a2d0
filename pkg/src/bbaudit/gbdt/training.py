"""Second-order boosted-tree training with exact greedy splits.

Each round fits one tree to the logistic gradients g = p - y and hessians
h = p (1 - p). Split gain is the regularized second-order reduction
0.5 * (GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)) - gamma, with
candidate thresholds at midpoints between consecutive distinct sorted
values. Rows with a missing (NaN) feature value follow the direction that
scored the higher gain, which becomes the split's default direction.
Non-positive gains and children below min_child_weight hessian mass are
rejected. Training is single threaded and fully deterministic for a fixed
seed: two runs serialize bit-identically.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .trees import EmptyDataset, GbdtError, GbdtModel, GbdtParams, Tree, sigmoid


def logistic_gradients(p: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(g, h) of the log loss with respect to the margin."""
    return p - y, p * (1.0 - p)


def logloss(p: np.ndarray, y: np.ndarray) -> float:
    eps = 1e-15
    p = np.clip(p, eps, 1.0 - eps)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


class _TreeBuilder:
    def __init__(self, X: np.ndarray, g: np.ndarray, h: np.ndarray, params: GbdtParams):
        self.X = X
        self.g = g
        self.h = h
        self.params = params
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.default_left: list[bool] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.weight: list[float] = []
        self.cover: list[float] = []

    def _new_node(self, rows: np.ndarray) -> int:
        idx = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.default_left.append(True)
        self.left.append(-1)
        self.right.append(-1)
        self.weight.append(0.0)
        self.cover.append(float(len(rows)))
        return idx

    def _best_split(self, rows: np.ndarray):
        """(gain, feature, threshold, default_left) or None.

        Ties resolve to the lowest feature index, then the lowest
        threshold, then the left default direction.
        """
        p = self.params
        g_rows = self.g[rows]
        h_rows = self.h[rows]
        g_total = g_rows.sum()
        h_total = h_rows.sum()
        parent_score = g_total * g_total / (h_total + p.reg_lambda)

        best = None
        for feat in range(self.X.shape[1]):
            col = self.X[rows, feat]
            present = ~np.isnan(col)
            vals = col[present]
            if vals.size < 2:
                continue
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            sg = np.cumsum(g_rows[present][order])
            sh = np.cumsum(h_rows[present][order])
            cut = np.nonzero(sv[:-1] != sv[1:])[0]
            if cut.size == 0:
                continue
            thresholds = (sv[cut] + sv[cut + 1]) / 2.0
            gl_nm = sg[cut]
            hl_nm = sh[cut]
            g_miss = g_total - sg[-1]
            h_miss = h_total - sh[-1]

            for default_left, gl, hl in (
                (True, gl_nm + g_miss, hl_nm + h_miss),
                (False, gl_nm, hl_nm),
            ):
                gr = g_total - gl
                hr = h_total - hl
                gain = 0.5 * (
                    gl * gl / (hl + p.reg_lambda)
                    + gr * gr / (hr + p.reg_lambda)
                    - parent_score
                ) - p.gamma
                ok = (hl >= p.min_child_weight) & (hr >= p.min_child_weight) & (gain > 0)
                if not ok.any():
                    continue
                gain = np.where(ok, gain, -np.inf)
                k = int(np.argmax(gain))
                cand = (float(gain[k]), feat, float(thresholds[k]), default_left)
                if best is None:
                    best = cand
                else:
                    # Higher gain wins; on exact ties keep the earlier
                    # candidate (lower feature, lower threshold, left first).
                    if cand[0] > best[0]:
                        best = cand
                    elif cand[0] == best[0] and cand[1] == best[1] and default_left is False:
                        better_threshold = cand[2] < best[2]
                        if better_threshold:
                            best = cand
        return best

    def build(self, rows: np.ndarray) -> Tree:
        self._grow(rows, depth=0)
        return Tree(self.feature, self.threshold, self.default_left,
                    self.left, self.right, self.weight, self.cover)

    def _grow(self, rows: np.ndarray, depth: int) -> int:
        p = self.params
        idx = self._new_node(rows)
        split = None
        if depth < p.max_depth and len(rows) >= 2:
            split = self._best_split(rows)
        if split is None:
            g_sum = self.g[rows].sum()
            h_sum = self.h[rows].sum()
            self.weight[idx] = float(-p.eta * g_sum / (h_sum + p.reg_lambda))
            return idx
        _, feat, threshold, default_left = split
        col = self.X[rows, feat]
        missing = np.isnan(col)
        go_left = np.where(missing, default_left, col < threshold)
        self.feature[idx] = feat
        self.threshold[idx] = threshold
        self.default_left[idx] = default_left
        self.left[idx] = self._grow(rows[go_left], depth + 1)
        self.right[idx] = self._grow(rows[~go_left], depth + 1)
        return idx


def train(
    X: np.ndarray,
    y: np.ndarray,
    params: GbdtParams,
    valid: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> GbdtModel:
    """Boosted training with optional validation-loss early stopping.

    When early stopping triggers, the returned forest is truncated at the
    best validation round. A single-class dataset is fine: the model then
    carries the (clamped) prior log odds and whatever leaf-only trees the
    rounds produce.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise GbdtError(f"X must be 2-d, got shape {X.shape}")
    if X.shape[0] == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if X.shape[0] != y.shape[0]:
        raise GbdtError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if np.isnan(y).any():
        raise GbdtError("labels must not contain NaN")
    if not np.isin(y, (0.0, 1.0)).all():
        raise GbdtError("labels must be 0 or 1")

    prior = float(np.clip(y.mean(), 1e-15, 1.0 - 1e-15))
    base_score = float(np.log(prior / (1.0 - prior)))
    model = GbdtModel(
        base_score=base_score,
        feature_count=X.shape[1],
        params=params,
    )

    rng = np.random.default_rng(params.seed)
    n = X.shape[0]
    margins = np.full(n, base_score)
    if valid is not None:
        Xv = np.asarray(valid[0], dtype=np.float64)
        yv = np.asarray(valid[1], dtype=np.float64)
        valid_margins = np.full(Xv.shape[0], base_score)
        best_valid = np.inf
        best_round = -1

    for round_no in range(params.n_rounds):
        p = sigmoid(margins)
        g, h = logistic_gradients(p, y)
        if params.subsample < 1.0:
            k = max(1, int(round(params.subsample * n)))
            rows = np.sort(rng.choice(n, size=k, replace=False))
        else:
            rows = np.arange(n)
        tree = _TreeBuilder(X, g, h, params).build(rows)
        model.trees.append(tree)
        margins += tree.predict(X)
        entry = {"round": round_no, "train_logloss": logloss(sigmoid(margins), y)}
        if valid is not None:
            valid_margins += tree.predict(Xv)
            vloss = logloss(sigmoid(valid_margins), yv)
            entry["valid_logloss"] = vloss
            if vloss < best_valid:
                best_valid = vloss
                best_round = round_no
            elif (params.early_stopping_rounds is not None
                  and round_no - best_round >= params.early_stopping_rounds):
                model.training_log.append(entry)
                model.trees = model.trees[: best_round + 1]
                model.best_iteration = best_round
                return model
        model.training_log.append(entry)

    if valid is not None and model.trees:
        model.best_iteration = best_round if best_round >= 0 else None
    return model
